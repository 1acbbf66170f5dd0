use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::thinning::ThinningSampler;
use super::CascadeError;
use crate::event_stream::{Event, NodeTaxonomy};
use crate::hawkes::HawkesParams;
use crate::memory::{
    HawkesPolicy, LastKPolicy, Memory, MemoryItem, MemoryPolicy, PolicyKind, RandomKPolicy,
    DEFAULT_EPS_NORM, DEFAULT_EPS_RAW,
};
use crate::text::{build_prompt, prompt_hash, PromptMemoryItem, PromptSpec, TextError, TextGenerator, DEFAULT_SUBJECT};

pub const PLACEHOLDER_TEXT: &str = "(no output)";

const TIMING_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;
const RUN_SEED_STREAM: u64 = 2;

/// Independent ChaCha stream `stream` under `seed`. Timing and random-k
/// selection draw from different streams so that every policy sees the same
/// event times for a given seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of the `index`-th run under a master seed.
pub fn derive_run_seed(master: u64, index: usize) -> u64 {
    let mut rng = stream_rng(master, RUN_SEED_STREAM);
    let mut seed = rng.next_u64();
    for _ in 0..index {
        seed = rng.next_u64();
    }
    seed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    #[default]
    Abort,
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Maximum number of generated (non-seed) events.
    pub event_cap: usize,
    /// Hours on the stream clock; the run stops before the first event past it.
    pub horizon_end: Option<f64>,
    pub rng_seed: u64,
    pub policy: PolicyKind,
    pub k: usize,
    pub eps_raw: f64,
    pub eps_norm: f64,
    pub subject: String,
    pub on_degenerate: DegeneratePolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            event_cap: 40,
            horizon_end: None,
            rng_seed: 42,
            policy: PolicyKind::Hawkes,
            k: 3,
            eps_raw: DEFAULT_EPS_RAW,
            eps_norm: DEFAULT_EPS_NORM,
            subject: DEFAULT_SUBJECT.into(),
            on_degenerate: DegeneratePolicy::Abort,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CascadeError> {
        if self.event_cap == 0 {
            return Err(CascadeError::Precondition("event_cap must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(CascadeError::Precondition("k must be at least 1".into()));
        }
        if !(self.eps_raw >= 0.0 && self.eps_norm >= 0.0) {
            return Err(CascadeError::Precondition("eps thresholds must be non-negative".into()));
        }
        if self.horizon_end.is_some_and(|h| !h.is_finite()) {
            return Err(CascadeError::Precondition("horizon_end must be finite".into()));
        }
        Ok(())
    }
}

pub fn make_policy(config: &RunConfig, params: &HawkesParams) -> Box<dyn MemoryPolicy> {
    match config.policy {
        PolicyKind::Hawkes => Box::new(HawkesPolicy {
            params: params.clone(),
            k: config.k,
            eps_raw: config.eps_raw,
            eps_norm: config.eps_norm,
        }),
        PolicyKind::LastK => Box::new(LastKPolicy { k: config.k }),
        PolicyKind::RandomK => Box::new(RandomKPolicy {
            k: config.k,
            rng: stream_rng(config.rng_seed, POLICY_STREAM),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    EventCap,
    Horizon,
    RateExtinct,
    /// The generator failed at step `step`; earlier steps are kept.
    Aborted { step: usize, kind: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRun {
    pub seed: Event,
    pub events: Vec<Event>,
    pub memories: Vec<Memory>,
    pub prompts: Vec<String>,
    pub config: RunConfig,
    pub params_ref: String,
    pub generator_id: String,
    pub stop: StopReason,
    /// Steps (1-based) whose text is the placeholder.
    pub degenerate_steps: Vec<usize>,
}

impl CascadeRun {
    /// Seed followed by the generated events; `rep_index` values index this.
    pub fn history(&self) -> Vec<&Event> {
        std::iter::once(&self.seed).chain(&self.events).collect()
    }

    pub fn event_at(&self, index: usize) -> Option<&Event> {
        if index == 0 {
            Some(&self.seed)
        } else {
            self.events.get(index - 1)
        }
    }

    pub fn aborted(&self) -> bool {
        matches!(self.stop, StopReason::Aborted { .. })
    }
}

fn error_kind(e: &TextError) -> &'static str {
    match e {
        TextError::Transport { .. } => "transport",
        TextError::Degenerate(_) => "degenerate",
        TextError::Precondition(_) => "precondition",
        TextError::DimMismatch { .. } => "dim_mismatch",
    }
}

/// The propagation loop: sample `(tau_t, n_t)` from the node-time
/// projection, select memory, render the prompt, generate, append.
pub fn run_cascade(
    seed: &Event,
    params: &HawkesParams,
    taxonomy: &NodeTaxonomy,
    policy: &mut dyn MemoryPolicy,
    generator: &mut dyn TextGenerator,
    config: &RunConfig,
    params_ref: &str,
) -> Result<CascadeRun, CascadeError> {
    config.validate()?;
    if taxonomy.node_count() != params.node_count() {
        return Err(CascadeError::Precondition(format!(
            "taxonomy has {} nodes but the fit has {}",
            taxonomy.node_count(),
            params.node_count()
        )));
    }
    if !seed.node.in_range(params.node_count()) {
        return Err(CascadeError::Precondition(format!("seed node {} is out of range", seed.node)));
    }
    if policy.kind() != config.policy {
        return Err(CascadeError::Precondition(format!(
            "policy {} does not match configured {}",
            policy.kind(),
            config.policy
        )));
    }

    let mut rng = stream_rng(config.rng_seed, TIMING_STREAM);
    let mut sampler = ThinningSampler::new(params, &[seed.arrival()], seed.tau)?;
    let mut history = vec![seed.clone()];
    let mut memories = Vec::new();
    let mut prompts = Vec::new();
    let mut degenerate_steps = Vec::new();
    let mut stop = StopReason::EventCap;

    while history.len() <= config.event_cap {
        let next = match sampler.next(&mut rng) {
            Ok(a) => a,
            Err(CascadeError::RateExtinct { .. }) => {
                stop = StopReason::RateExtinct;
                break;
            }
            Err(e) => return Err(e),
        };
        if config.horizon_end.is_some_and(|h| next.tau > h) {
            stop = StopReason::Horizon;
            break;
        }
        let step = history.len();
        let memory = policy.select(&history, next.tau, next.node);
        let items = memory
            .items
            .iter()
            .map(|item| PromptMemoryItem {
                weight: item.weight,
                node_label: taxonomy.label(item.node).to_string(),
                text: history[item.rep_index].text.clone(),
            })
            .collect();
        let style = taxonomy.node(next.node).map(|n| n.instruction.as_str()).unwrap_or_default();
        let spec = PromptSpec::new(
            taxonomy.label(next.node),
            style,
            next.tau - seed.tau,
            items,
            config.subject.as_str(),
        );
        let prompt = build_prompt(&spec);
        let text = match generator.generate(&prompt) {
            Ok(text) => text,
            Err(TextError::Degenerate(_)) if config.on_degenerate == DegeneratePolicy::Placeholder => {
                degenerate_steps.push(step);
                PLACEHOLDER_TEXT.to_string()
            }
            Err(e) => {
                log::error!("generation failed at step {step}: {e}");
                stop = StopReason::Aborted { step, kind: error_kind(&e).into(), message: e.to_string() };
                break;
            }
        };
        history.push(Event::new(next.tau, next.node, text));
        memories.push(memory);
        prompts.push(prompt);
    }

    let mut events = history;
    let seed = events.remove(0);
    Ok(CascadeRun {
        seed,
        events,
        memories,
        prompts,
        config: config.clone(),
        params_ref: params_ref.to_string(),
        generator_id: generator.id(),
        stop,
        degenerate_steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLine {
    pub t_index: usize,
    pub tau: f64,
    pub node: crate::node::NodeId,
    pub text: String,
    pub memory: Vec<MemoryItem>,
    pub prompt_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: RunConfig,
    pub params_ref: String,
    pub generator_id: String,
    pub stop: StopReason,
    pub event_count: usize,
    pub degenerate_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PromptLine {
    t_index: usize,
    prompt: String,
}

pub fn run_meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

pub fn run_prompts_path(path: &Path) -> PathBuf {
    path.with_extension("prompts.jsonl")
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CascadeError> {
    let io = |e: std::io::Error| CascadeError::Io(format!("{}: {e}", path.display()));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for row in rows {
        let line = serde_json::to_string(&row).map_err(|e| CascadeError::Io(e.to_string()))?;
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CascadeError> {
    let file = std::fs::File::open(path).map_err(|e| CascadeError::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CascadeError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| CascadeError::Decode(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(rows)
}

/// Writes the event lines to `path` (seed first, with `t_index` 0 and no
/// memory or prompt hash), plus `.meta.json` and `.prompts.jsonl` sidecars.
pub fn save_run(run: &CascadeRun, path: &Path) -> Result<(), CascadeError> {
    let seed_line = RunLine {
        t_index: 0,
        tau: run.seed.tau,
        node: run.seed.node,
        text: run.seed.text.clone(),
        memory: Vec::new(),
        prompt_hash: None,
    };
    let lines = std::iter::once(seed_line).chain(run.events.iter().zip(&run.memories).zip(&run.prompts).enumerate().map(
        |(i, ((event, memory), prompt))| RunLine {
            t_index: i + 1,
            tau: event.tau,
            node: event.node,
            text: event.text.clone(),
            memory: memory.items.clone(),
            prompt_hash: Some(prompt_hash(prompt)),
        },
    ));
    write_jsonl(path, lines)?;
    write_jsonl(
        &run_prompts_path(path),
        run.prompts.iter().enumerate().map(|(i, p)| PromptLine { t_index: i + 1, prompt: p.clone() }),
    )?;
    let meta = RunMeta {
        config: run.config.clone(),
        params_ref: run.params_ref.clone(),
        generator_id: run.generator_id.clone(),
        stop: run.stop.clone(),
        event_count: run.events.len(),
        degenerate_steps: run.degenerate_steps.clone(),
    };
    let meta_file = run_meta_path(path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| CascadeError::Io(e.to_string()))?;
    std::fs::write(&meta_file, json + "\n").map_err(|e| CascadeError::Io(format!("{}: {e}", meta_file.display())))
}

pub fn load_run(path: &Path) -> Result<CascadeRun, CascadeError> {
    let meta_file = run_meta_path(path);
    let meta_text = std::fs::read_to_string(&meta_file)
        .map_err(|e| CascadeError::Io(format!("{}: {e}", meta_file.display())))?;
    let meta: RunMeta =
        serde_json::from_str(&meta_text).map_err(|e| CascadeError::Decode(format!("{}: {e}", meta_file.display())))?;
    let lines: Vec<RunLine> = read_jsonl(path)?;
    let prompts: Vec<PromptLine> = read_jsonl(&run_prompts_path(path))?;
    let (seed_line, rest) = lines
        .split_first()
        .ok_or_else(|| CascadeError::Decode(format!("{} has no seed line", path.display())))?;
    if seed_line.t_index != 0 || rest.iter().enumerate().any(|(i, l)| l.t_index != i + 1) {
        return Err(CascadeError::Decode(format!("{}: t_index values are not 0, 1, 2, ...", path.display())));
    }
    if prompts.len() != rest.len() {
        return Err(CascadeError::Decode(format!(
            "{}: {} prompts for {} events",
            path.display(),
            prompts.len(),
            rest.len()
        )));
    }
    Ok(CascadeRun {
        seed: Event::new(seed_line.tau, seed_line.node, seed_line.text.clone()),
        events: rest.iter().map(|l| Event::new(l.tau, l.node, l.text.clone())).collect(),
        memories: rest
            .iter()
            .map(|l| Memory { items: l.memory.clone(), step_tau: l.tau, step_node: l.node })
            .collect(),
        prompts: prompts.into_iter().map(|p| p.prompt).collect(),
        config: meta.config,
        params_ref: meta.params_ref,
        generator_id: meta.generator_id,
        stop: meta.stop,
        degenerate_steps: meta.degenerate_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_stream::NodeSpec;
    use crate::node::NodeId;
    use crate::text::MockGenerator;

    fn taxonomy(n: usize) -> NodeTaxonomy {
        let nodes = (0..n)
            .map(|i| NodeSpec {
                id: NodeId::from_index(i),
                label: format!("node_{}", i + 1),
                instruction: format!("Write in house style {}.", i + 1),
            })
            .collect();
        NodeTaxonomy::new(nodes, vec![], Some(NodeId::from_index(0))).unwrap()
    }

    fn params() -> HawkesParams {
        HawkesParams::new(vec![0.05, 0.03], vec![vec![0.1, 0.05], vec![0.04, 0.08]], 0.25).unwrap()
    }

    fn seed() -> Event {
        Event::new(10.0, NodeId::from_index(0), "Artemis II crew arrives at the launch site")
    }

    fn run(config: &RunConfig) -> CascadeRun {
        let p = params();
        let mut policy = make_policy(config, &p);
        let mut generator = MockGenerator { seed: config.rng_seed };
        run_cascade(&seed(), &p, &taxonomy(2), policy.as_mut(), &mut generator, config, "fit-test").unwrap()
    }

    #[test]
    fn single_event_cap() {
        let r = run(&RunConfig { event_cap: 1, ..Default::default() });
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.stop, StopReason::EventCap);
        assert!(r.events[0].tau > r.seed.tau);
    }

    #[test]
    fn zero_cap_is_rejected() {
        let config = RunConfig { event_cap: 0, ..Default::default() };
        assert!(config.validate().is_err());
    }

    #[test]
    fn invariants_hold_for_all_policies() {
        for policy in PolicyKind::ALL {
            let r = run(&RunConfig { policy, event_cap: 40, ..Default::default() });
            assert_eq!(r.events.len(), 40);
            assert_eq!(r.memories.len(), r.events.len());
            assert_eq!(r.prompts.len(), r.events.len());
            let mut prev = r.seed.tau;
            for (t, (e, m)) in r.events.iter().zip(&r.memories).enumerate() {
                assert!(e.tau > prev);
                prev = e.tau;
                assert_eq!(m.step_tau, e.tau);
                assert!(m.items.len() <= 3);
                assert!(m.items.iter().all(|item| item.rep_index <= t));
            }
        }
    }

    #[test]
    fn timing_is_shared_across_policies() {
        let taus = |policy| -> Vec<f64> {
            run(&RunConfig { policy, ..Default::default() }).events.iter().map(|e| e.tau).collect()
        };
        assert_eq!(taus(PolicyKind::Hawkes), taus(PolicyKind::LastK));
        assert_eq!(taus(PolicyKind::Hawkes), taus(PolicyKind::RandomK));
    }

    #[test]
    fn horizon_stops_run() {
        let r = run(&RunConfig { horizon_end: Some(30.0), event_cap: 10_000, ..Default::default() });
        assert_eq!(r.stop, StopReason::Horizon);
        assert!(r.events.iter().all(|e| e.tau <= 30.0));
    }

    #[test]
    fn replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig { policy: PolicyKind::RandomK, rng_seed: 99, ..Default::default() };
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        save_run(&run(&config), &a).unwrap();
        save_run(&run(&config), &b).unwrap();
        for (x, y) in [(a.clone(), b.clone()), (run_meta_path(&a), run_meta_path(&b)), (run_prompts_path(&a), run_prompts_path(&b))] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let loaded = load_run(&a).unwrap();
        assert_eq!(loaded, run(&config));
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..50).map(|i| derive_run_seed(7, i)).collect();
        assert_eq!(seeds.len(), 50);
        assert_eq!(derive_run_seed(7, 3), derive_run_seed(7, 3));
    }

    struct Failing {
        ok_steps: usize,
        error: fn() -> TextError,
    }

    impl TextGenerator for Failing {
        fn generate(&mut self, _prompt: &str) -> Result<String, TextError> {
            if self.ok_steps == 0 {
                return Err((self.error)());
            }
            self.ok_steps -= 1;
            Ok("fine".into())
        }
        fn id(&self) -> String {
            "failing".into()
        }
    }

    #[test]
    fn transport_failure_keeps_partial_run() {
        let p = params();
        let config = RunConfig::default();
        let mut policy = make_policy(&config, &p);
        let mut generator = Failing {
            ok_steps: 3,
            error: || TextError::Transport { status: Some(500), message: "down".into() },
        };
        let r = run_cascade(&seed(), &p, &taxonomy(2), policy.as_mut(), &mut generator, &config, "f").unwrap();
        assert_eq!(r.events.len(), 3);
        assert!(matches!(r.stop, StopReason::Aborted { step: 4, ref kind, .. } if kind == "transport"));
    }

    #[test]
    fn degenerate_placeholder_continues() {
        let p = params();
        let config = RunConfig { event_cap: 5, on_degenerate: DegeneratePolicy::Placeholder, ..Default::default() };
        let mut policy = make_policy(&config, &p);
        let mut generator = Failing { ok_steps: 2, error: || TextError::Degenerate("empty".into()) };
        let r = run_cascade(&seed(), &p, &taxonomy(2), policy.as_mut(), &mut generator, &config, "f").unwrap();
        assert_eq!(r.events.len(), 5);
        assert_eq!(r.degenerate_steps, vec![3, 4, 5]);
        assert_eq!(r.events[4].text, PLACEHOLDER_TEXT);
    }

    #[test]
    fn rate_extinction_stops_cleanly() {
        let p = HawkesParams::new(vec![0.0, 0.0], vec![vec![0.0, 0.0], vec![0.0, 0.0]], 1.0).unwrap();
        let config = RunConfig::default();
        let mut policy = make_policy(&config, &p);
        let mut generator = MockGenerator { seed: 1 };
        let r = run_cascade(&seed(), &p, &taxonomy(2), policy.as_mut(), &mut generator, &config, "f").unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.stop, StopReason::RateExtinct);
    }

    #[test]
    fn policy_mismatch_rejected() {
        let p = params();
        let config = RunConfig::default();
        let mut policy = LastKPolicy { k: 3 };
        let mut generator = MockGenerator { seed: 1 };
        assert!(run_cascade(&seed(), &p, &taxonomy(2), &mut policy, &mut generator, &config, "f").is_err());
    }
}
