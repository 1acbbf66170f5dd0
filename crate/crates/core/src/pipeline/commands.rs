use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{run_id, Layout, PipelineConfig, PolicySelection};
use super::PipelineError;
use crate::cascade::{derive_run_seed, load_run, make_policy, run_cascade, save_run, CascadeRun, RunConfig, StopReason};
use crate::diagnostics::{
    evaluate_run, write_embeddings_jsonl, write_moving_average_csv, write_records_csv, DiagnosticsRecord,
    EvaluationSummary, MOVING_AVERAGE_WINDOW,
};
use crate::event_stream::{
    build_stream, chronological_split, deduplicate, filter_language, load_stream, parse_records, save_stream,
    ArticleClient, ArticleClientConfig, EventStream, IngestError, NodeTaxonomy, ParsedRecords, RecordFormat,
};
use crate::hawkes::{fit_grid, write_grid_csv, FitResult, HawkesError};
use crate::memory::PolicyKind;
use crate::text::{CachedEmbedder, Embedder, HttpEmbedder, HttpGenerator, MockEmbedder, MockGenerator, TextGenerator};

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Other(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Other(e.to_string()))?;
    write_file(path, format!("{json}\n").as_bytes())
}

fn require(path: &Path, hint: &str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Input(format!("{} is missing ({hint})", path.display())))
    }
}

fn infer_format(path: &Path) -> Result<RecordFormat, PipelineError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => Ok(RecordFormat::Csv),
        Some("jsonl" | "ndjson" | "json") => Ok(RecordFormat::Jsonl),
        _ => Err(PipelineError::Input(format!(
            "cannot infer the record format of {}; set paths.input_format",
            path.display()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCount {
    pub node: u32,
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Valid records before language filtering and deduplication.
    pub raw_count: usize,
    pub rejected_count: usize,
    pub language_count: usize,
    pub deduped_count: usize,
    pub event_count: usize,
    pub horizon_hours: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub per_node_counts: Vec<NodeCount>,
}

fn read_records(config: &PipelineConfig, layout: &Layout) -> Result<ParsedRecords, PipelineError> {
    if let Some(input) = &config.paths.input {
        let format = match config.paths.input_format {
            Some(f) => f,
            None => infer_format(input)?,
        };
        let bytes =
            std::fs::read(input).map_err(|e| PipelineError::Input(format!("input {}: {e}", input.display())))?;
        return Ok(parse_records(&bytes, format)?);
    }
    let Some(fetch) = &config.ingest.fetch else {
        return Err(PipelineError::Input("set paths.input or ingest.fetch".into()));
    };
    let mut client_config = ArticleClientConfig::default();
    if let Some(url) = &fetch.base_url {
        client_config.base_url = url.clone();
    }
    if let Some(mode) = &fetch.mode {
        client_config.mode = mode.clone();
    }
    let records = ArticleClient::new(client_config)?.fetch_articles(&fetch.query, fetch.start, fetch.end, fetch.max_records)?;
    if records.is_empty() {
        return Err(IngestError::EmptyInput { rejected: 0 }.into());
    }
    let mut raw = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut raw, r).map_err(|e| PipelineError::Other(e.to_string()))?;
        raw.push(b'\n');
    }
    write_file(&layout.raw_articles(), &raw)?;
    Ok(ParsedRecords { records, rejects: Vec::new() })
}

/// Parse, filter, deduplicate, map to nodes, split; writes the full, train
/// and test streams and the ingest report.
pub fn cmd_ingest(config: &PipelineConfig) -> Result<IngestReport, PipelineError> {
    let layout = Layout::new(&config.paths.work_dir);
    let taxonomy = NodeTaxonomy::load(&config.paths.taxonomy)?;
    let parsed = read_records(config, &layout)?;
    let raw_count = parsed.records.len();
    for reject in &parsed.rejects {
        log::warn!("row {} rejected: {}", reject.row, reject.reason);
    }
    let records = match &config.ingest.language {
        Some(lang) => filter_language(parsed.records, lang),
        None => parsed.records,
    };
    let language_count = records.len();
    let records = deduplicate(records);
    let deduped_count = records.len();
    if records.is_empty() {
        return Err(IngestError::EmptyInput { rejected: parsed.rejects.len() }.into());
    }
    let stream = build_stream(&records, &taxonomy, config.ingest.tie_offset_hours)?;
    let (train, test) = chronological_split(&stream, config.ingest.train_fraction)?;
    std::fs::create_dir_all(&layout.root).map_err(|e| PipelineError::Other(format!("{}: {e}", layout.root.display())))?;
    save_stream(&stream, &layout.events())?;
    save_stream(&train, &layout.train())?;
    save_stream(&test, &layout.test())?;
    let per_node_counts = stream
        .node_counts()
        .into_iter()
        .enumerate()
        .map(|(i, count)| {
            let id = crate::node::NodeId::from_index(i);
            NodeCount { node: id.get(), label: taxonomy.label(id).to_string(), count }
        })
        .collect();
    let report = IngestReport {
        raw_count,
        rejected_count: parsed.rejects.len(),
        language_count,
        deduped_count,
        event_count: stream.len(),
        horizon_hours: stream.horizon_hours,
        train_count: train.len(),
        test_count: test.len(),
        per_node_counts,
    };
    write_json(&layout.ingest_report(), &report)?;
    Ok(report)
}

fn fit_stream(config: &PipelineConfig, layout: &Layout) -> Result<EventStream, PipelineError> {
    let path = if config.post_split { layout.train() } else { layout.events() };
    require(&path, "run ingest first")?;
    Ok(load_stream(&path)?)
}

/// Grid fit; the grid CSV is written even when no decay is stable.
pub fn cmd_fit(config: &PipelineConfig) -> Result<FitResult, PipelineError> {
    let layout = Layout::new(&config.paths.work_dir);
    let stream = fit_stream(config, &layout)?;
    let write_grid = |fits: &[FitResult]| -> Result<(), PipelineError> {
        let mut buf = Vec::new();
        write_grid_csv(fits, &mut buf).map_err(|e| PipelineError::Other(e.to_string()))?;
        write_file(&layout.fit_grid(), &buf)
    };
    match fit_grid(&stream, &config.fit) {
        Ok(grid) => {
            write_grid(&grid.all)?;
            write_file(&layout.fit(), format!("{}\n", grid.best_stable.to_json()).as_bytes())?;
            Ok(grid.best_stable)
        }
        Err(HawkesError::NoStableModel { all }) => {
            write_grid(&all)?;
            let detail: Vec<String> =
                all.iter().map(|f| format!("beta={:.5} rho={:.3}", f.params.beta, f.spectral_radius)).collect();
            Err(PipelineError::NoStableModel(format!("no stable fit on the grid: {}", detail.join(", "))))
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub policy: PolicyKind,
    pub master_seed: u64,
    pub run_seeds: Vec<u64>,
    pub params_ref: String,
    pub post_split: bool,
    pub generator_id: String,
}

fn params_ref(fit_bytes: &[u8]) -> String {
    let digest = hex::encode(Sha256::digest(fit_bytes));
    format!("fit:{}", &digest[..16])
}

/// Seed event and horizon for a run set.
fn seed_and_horizon(config: &PipelineConfig, layout: &Layout) -> Result<(crate::event_stream::Event, Option<f64>), PipelineError> {
    if config.post_split {
        require(&layout.train(), "run ingest first")?;
        let train = load_stream(&layout.train())?;
        let test = load_stream(&layout.test())?;
        let seed = train.events.last().cloned().ok_or_else(|| PipelineError::Input("training stream is empty".into()))?;
        Ok((seed, Some(test.horizon_hours)))
    } else {
        require(&layout.events(), "run ingest first")?;
        let stream = load_stream(&layout.events())?;
        let seed = stream.events.first().cloned().ok_or_else(|| PipelineError::Input("event stream is empty".into()))?;
        Ok((seed, config.run.horizon_end))
    }
}

fn generator_for(config: &PipelineConfig, seed: u64) -> Result<Box<dyn TextGenerator>, PipelineError> {
    if config.mock_generator {
        Ok(Box::new(MockGenerator { seed }))
    } else {
        Ok(Box::new(HttpGenerator::new(config.generation.clone())?))
    }
}

fn abort_error(run: &CascadeRun, path: &Path) -> Option<PipelineError> {
    match &run.stop {
        StopReason::Aborted { step, kind, message } => {
            let msg = format!("run {} aborted at step {step} ({} events kept): {message}", path.display(), run.events.len());
            Some(match kind.as_str() {
                "transport" => PipelineError::Transport(msg),
                "degenerate" => PipelineError::Degenerate(msg),
                _ => PipelineError::Other(msg),
            })
        }
        _ => None,
    }
}

/// `run_count` runs per selected policy with seeds derived from the master
/// seed. Aborted runs are saved before the error is returned.
pub fn cmd_simulate(config: &PipelineConfig, selection: PolicySelection) -> Result<Vec<RunManifest>, PipelineError> {
    let layout = Layout::new(&config.paths.work_dir);
    require(&layout.fit(), "run fit first")?;
    let fit_bytes = std::fs::read(layout.fit()).map_err(|e| PipelineError::Other(e.to_string()))?;
    let fit = FitResult::from_json(&String::from_utf8_lossy(&fit_bytes))?;
    let params_ref = params_ref(&fit_bytes);
    let taxonomy = NodeTaxonomy::load(&config.paths.taxonomy)?;
    let (seed, horizon_end) = seed_and_horizon(config, &layout)?;

    let mut manifests = Vec::new();
    for policy in selection.policies() {
        let dir = layout.runs_dir(policy);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| PipelineError::Other(format!("{}: {e}", dir.display())))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::Other(format!("{}: {e}", dir.display())))?;
        let master = config.run.rng_seed;
        let run_seeds: Vec<u64> = (0..config.run_count).map(|r| derive_run_seed(master, r)).collect();
        let mut generator_id = String::new();
        for (r, &run_seed) in run_seeds.iter().enumerate() {
            let run_config = RunConfig { policy, rng_seed: run_seed, horizon_end, ..config.run.clone() };
            let mut policy_impl = make_policy(&run_config, &fit.params);
            let mut generator = generator_for(config, run_seed)?;
            generator_id = generator.id();
            let run = run_cascade(&seed, &fit.params, &taxonomy, policy_impl.as_mut(), generator.as_mut(), &run_config, &params_ref)?;
            let path = layout.run_file(policy, r);
            save_run(&run, &path)?;
            log::info!("{}: {} events ({:?})", path.display(), run.events.len(), run.stop);
            if let Some(err) = abort_error(&run, &path) {
                return Err(err);
            }
        }
        let manifest = RunManifest {
            policy,
            master_seed: master,
            run_seeds,
            params_ref: params_ref.clone(),
            post_split: config.post_split,
            generator_id,
        };
        write_json(&layout.run_manifest(policy), &manifest)?;
        manifests.push(manifest);
    }
    Ok(manifests)
}

fn load_manifest(layout: &Layout, policy: PolicyKind) -> Result<RunManifest, PipelineError> {
    let path = layout.run_manifest(policy);
    let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
}

fn embedder_for(config: &PipelineConfig) -> Result<Box<dyn Embedder>, PipelineError> {
    if config.mock_embedder {
        Ok(Box::new(CachedEmbedder::new(MockEmbedder::default())))
    } else {
        Ok(Box::new(CachedEmbedder::new(HttpEmbedder::new(config.embedding.clone())?)))
    }
}

/// Diagnostics for every run of each selected policy that has runs.
pub fn cmd_evaluate(config: &PipelineConfig, selection: PolicySelection) -> Result<Vec<EvaluationSummary>, PipelineError> {
    let layout = Layout::new(&config.paths.work_dir);
    let test_path = if config.post_split { layout.test() } else { layout.events() };
    require(&test_path, "run ingest first")?;
    let test = load_stream(&test_path)?;
    let embedder = embedder_for(config)?;

    let policies: Vec<PolicyKind> = match selection {
        PolicySelection::One(p) => {
            require(&layout.run_manifest(p), "run simulate first")?;
            vec![p]
        }
        PolicySelection::All => {
            let present: Vec<PolicyKind> =
                PolicyKind::ALL.into_iter().filter(|&p| layout.run_manifest(p).exists()).collect();
            if present.is_empty() {
                return Err(PipelineError::Input("no simulated runs found; run simulate first".into()));
            }
            present
        }
    };

    let mut summaries = Vec::new();
    for policy in policies {
        let manifest = load_manifest(&layout, policy)?;
        let mut per_run: Vec<(String, Vec<DiagnosticsRecord>)> = Vec::new();
        let dir = layout.eval_dir(policy);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| PipelineError::Other(format!("{}: {e}", dir.display())))?;
        }
        for r in 0..manifest.run_seeds.len() {
            let run = load_run(&layout.run_file(policy, r))?;
            let id = run_id(r);
            let evaluation = evaluate_run(&run, &id, &test, embedder.as_ref(), config.matching)?;
            let mut buf = Vec::new();
            write_embeddings_jsonl(&evaluation.embeddings, &mut buf)?;
            write_file(&layout.embeddings_file(policy, r), &buf)?;
            for rec in evaluation.records.iter().filter(|rec| rec.note.is_some()) {
                log::warn!("{id} step {}: {}", rec.t_index, rec.note.as_deref().unwrap_or_default());
            }
            per_run.push((id, evaluation.records));
        }
        let all: Vec<DiagnosticsRecord> = per_run.iter().flat_map(|(_, recs)| recs.iter().cloned()).collect();
        let mut csv = Vec::new();
        write_records_csv(&all, &mut csv)?;
        write_file(&layout.diagnostics_csv(policy), &csv)?;
        let mut ma = Vec::new();
        write_moving_average_csv(&all, MOVING_AVERAGE_WINDOW, &mut ma)?;
        write_file(&layout.moving_average_csv(policy), &ma)?;
        let summary = EvaluationSummary::build(policy.as_str(), &embedder.id(), &per_run, config.summary);
        write_json(&layout.summary_json(policy), &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Policy summaries found on disk in report order, plus the missing paths.
pub fn load_summaries(layout: &Layout) -> (BTreeMap<usize, EvaluationSummary>, Vec<String>) {
    let mut found = BTreeMap::new();
    let mut missing = Vec::new();
    for (i, policy) in PolicyKind::ALL.into_iter().enumerate() {
        let path = layout.summary_json(policy);
        match std::fs::read_to_string(&path).ok().and_then(|t| serde_json::from_str(&t).ok()) {
            Some(summary) => {
                found.insert(i, summary);
            }
            None => missing.push(path.display().to_string()),
        }
    }
    (found, missing)
}

pub fn cmd_report(config: &PipelineConfig) -> Result<super::report::Report, PipelineError> {
    let layout = Layout::new(&config.paths.work_dir);
    let (found, missing) = load_summaries(&layout);
    if found.is_empty() {
        return Err(PipelineError::Input(format!("no evaluation summaries; missing: {}", missing.join(", "))));
    }
    let summaries: Vec<EvaluationSummary> = found.into_values().collect();
    let report = super::report::Report::from_summaries(&summaries);
    write_file(&layout.report_txt(), report.to_text().as_bytes())?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_file(&layout.report_csv(), &csv)?;
    Ok(report)
}

/// Writes `text` followed by a newline to stdout.
pub fn print(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}
