use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{global_drift, local_drift, match_references, semantic_alignment, MatchWindows, WindowUsed};
use super::DiagnosticsError;
use crate::cascade::CascadeRun;
use crate::event_stream::EventStream;
use crate::node::NodeId;
use crate::text::{Embedder, EmbeddingVector, TextError};

/// Per generated event. Metrics are `None` when undefined (no match, empty
/// memory) or when an embedding was degenerate; `note` says which.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub run_id: String,
    pub t_index: usize,
    pub tau: f64,
    pub node: NodeId,
    pub matched: bool,
    pub window_used: WindowUsed,
    #[serde(rename = "S_t")]
    pub s_t: Option<f64>,
    #[serde(rename = "D_global")]
    pub d_global: Option<f64>,
    #[serde(rename = "D_local")]
    pub d_local: Option<f64>,
    pub memory_size: usize,
    pub reference_count: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEvaluation {
    pub records: Vec<DiagnosticsRecord>,
    /// Every embedding used, keyed by text.
    pub embeddings: BTreeMap<String, EmbeddingVector>,
}

struct Embeddings<'a> {
    embedder: &'a dyn Embedder,
    used: BTreeMap<String, EmbeddingVector>,
}

impl Embeddings<'_> {
    /// `Ok(None)` for texts the backend refuses or maps to a zero vector.
    fn get(&mut self, text: &str) -> Result<Option<EmbeddingVector>, DiagnosticsError> {
        match self.embedder.embed(text) {
            Ok(v) if v.is_degenerate() => Ok(None),
            Ok(v) => {
                self.used.insert(text.to_string(), v.clone());
                Ok(Some(v))
            }
            Err(TextError::Precondition(_) | TextError::Degenerate(_)) => Ok(None),
            Err(e) => Err(DiagnosticsError::Text(e)),
        }
    }
}

/// Matches, embeds and scores every generated event of a run. Transport and
/// dimension errors abort; degenerate embeddings only blank the affected
/// metrics.
pub fn evaluate_run(
    run: &CascadeRun,
    run_id: &str,
    test: &EventStream,
    embedder: &dyn Embedder,
    windows: MatchWindows,
) -> Result<RunEvaluation, DiagnosticsError> {
    windows.validate()?;
    let mut store = Embeddings { embedder, used: BTreeMap::new() };
    let seed_vec = store.get(&run.seed.text)?;
    let mut history_vecs: Vec<Option<EmbeddingVector>> = vec![seed_vec.clone()];
    for event in &run.events {
        let v = store.get(&event.text)?;
        history_vecs.push(v);
    }

    let mut records = Vec::with_capacity(run.events.len());
    for (i, (event, memory)) in run.events.iter().zip(&run.memories).enumerate() {
        let t_index = i + 1;
        let matched = match_references(t_index, event, test, windows);
        let mut notes = Vec::new();
        let gen = history_vecs[t_index].clone();

        let s_t = match (&gen, matched.references.is_empty()) {
            (_, true) => None,
            (None, false) => {
                notes.push("degenerate generated embedding");
                None
            }
            (Some(g), false) => {
                let mut refs = Vec::new();
                for r in &matched.references {
                    match store.get(&r.text)? {
                        Some(v) => refs.push(v),
                        None => notes.push("degenerate reference embedding skipped"),
                    }
                }
                match semantic_alignment(g, &refs) {
                    Ok(s) => Some(s),
                    Err(DiagnosticsError::DegenerateEmbedding(_) | DiagnosticsError::Precondition(_)) => {
                        notes.push("no usable reference embedding");
                        None
                    }
                    Err(e) => return Err(e),
                }
            }
        };

        let d_global = match (&gen, &seed_vec) {
            (Some(g), Some(s)) => Some(global_drift(g, s)?),
            (None, _) => None,
            (Some(_), None) => {
                notes.push("degenerate seed embedding");
                None
            }
        };

        let d_local = match &gen {
            Some(g) if !memory.is_empty() => {
                let missing = memory.items.iter().any(|item| history_vecs.get(item.rep_index).is_none_or(Option::is_none));
                if missing {
                    notes.push("degenerate predecessor embedding");
                    None
                } else {
                    let vecs: Vec<EmbeddingVector> = history_vecs.iter().map(|v| v.clone().unwrap_or_else(|| EmbeddingVector::new(vec![], ""))).collect();
                    match local_drift(g, memory, &vecs) {
                        Ok(d) => d,
                        Err(DiagnosticsError::DegenerateEmbedding(_)) => {
                            notes.push("degenerate predecessor centroid");
                            None
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            _ => None,
        };

        notes.dedup();
        records.push(DiagnosticsRecord {
            run_id: run_id.to_string(),
            t_index,
            tau: event.tau,
            node: event.node,
            matched: matched.window_used != WindowUsed::None,
            window_used: matched.window_used,
            s_t,
            d_global,
            d_local,
            memory_size: memory.items.len(),
            reference_count: matched.references.len(),
            note: (!notes.is_empty()).then(|| notes.join("; ")),
        });
    }
    Ok(RunEvaluation { records, embeddings: store.used })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    run_id: &'a str,
    t_index: usize,
    tau: f64,
    node: u32,
    matched: bool,
    window_used: &'static str,
    #[serde(rename = "S_t")]
    s_t: Option<f64>,
    #[serde(rename = "D_global")]
    d_global: Option<f64>,
    #[serde(rename = "D_local")]
    d_local: Option<f64>,
}

/// Columns: run_id, t_index, tau, node, matched, window_used, S_t, D_global,
/// D_local. Undefined values are empty cells.
pub fn write_records_csv<W: Write>(records: &[DiagnosticsRecord], out: W) -> Result<(), DiagnosticsError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRow {
            run_id: &r.run_id,
            t_index: r.t_index,
            tau: r.tau,
            node: r.node.get(),
            matched: r.matched,
            window_used: r.window_used.as_str(),
            s_t: r.s_t,
            d_global: r.d_global,
            d_local: r.d_local,
        })?;
    }
    w.flush().map_err(|e| DiagnosticsError::Io(e.to_string()))
}

#[derive(Serialize)]
struct EmbeddingLine<'a> {
    text: &'a str,
    backend_id: &'a str,
    values: &'a [f64],
}

pub fn write_embeddings_jsonl<W: Write>(
    embeddings: &BTreeMap<String, EmbeddingVector>,
    mut out: W,
) -> Result<(), DiagnosticsError> {
    for (text, v) in embeddings {
        let line = serde_json::to_string(&EmbeddingLine { text, backend_id: &v.backend_id, values: &v.values })
            .map_err(|e| DiagnosticsError::Io(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| DiagnosticsError::Io(e.to_string()))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct OwnedEmbeddingLine {
    text: String,
    backend_id: String,
    values: Vec<f64>,
}

pub fn read_embeddings_jsonl(text: &str) -> Result<BTreeMap<String, EmbeddingVector>, DiagnosticsError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parsed: OwnedEmbeddingLine = serde_json::from_str(line)
            .map_err(|e| DiagnosticsError::Io(format!("embeddings line {}: {e}", i + 1)))?;
        map.insert(parsed.text, EmbeddingVector::new(parsed.values, parsed.backend_id));
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{RunConfig, StopReason};
    use crate::event_stream::Event;
    use crate::memory::{Memory, MemoryItem};
    use crate::text::MockEmbedder;
    use chrono::DateTime;

    fn id(i: usize) -> NodeId {
        NodeId::from_index(i)
    }

    fn run_with(texts: &[(&str, f64, usize, Vec<MemoryItem>)]) -> CascadeRun {
        let events: Vec<Event> = texts.iter().map(|(t, tau, n, _)| Event::new(*tau, id(*n), *t)).collect();
        let memories = texts
            .iter()
            .map(|(_, tau, n, items)| Memory { items: items.clone(), step_tau: *tau, step_node: id(*n) })
            .collect();
        CascadeRun {
            seed: Event::new(0.0, id(0), "moon rocket launch"),
            prompts: vec![String::new(); events.len()],
            events,
            memories,
            config: RunConfig::default(),
            params_ref: "p".into(),
            generator_id: "g".into(),
            stop: StopReason::EventCap,
            degenerate_steps: vec![],
        }
    }

    #[test]
    fn identical_reference_gives_unit_alignment() {
        let item = |rep| vec![MemoryItem { node: id(0), rep_index: rep, weight: 1.0 }];
        let run = run_with(&[
            ("crew enters capsule", 5.0, 0, item(0)),
            ("moon rocket launch", 30.0, 1, vec![]),
            ("crew enters capsule", 40.0, 0, item(1)),
        ]);
        let test = EventStream::new(
            vec![Event::new(6.0, id(0), "crew enters capsule"), Event::new(48.0, id(0), "crew enters capsule")],
            DateTime::UNIX_EPOCH,
            100.0,
            2,
        )
        .unwrap();
        let eval = evaluate_run(&run, "r0", &test, &MockEmbedder::default(), MatchWindows::default()).unwrap();
        let r = &eval.records;
        assert_eq!(r[0].window_used, WindowUsed::Primary);
        assert!((r[0].s_t.unwrap() - 1.0).abs() < 1e-12);
        assert!(r[1].s_t.is_none() && !r[1].matched);
        assert!(r[1].d_global.unwrap().abs() < 1e-12);
        assert_eq!(r[1].d_local, None);
        assert!(r[0].d_local.is_some());
        assert!(r[0].d_global.unwrap() > 0.0);
        assert_eq!(r[2].window_used, WindowUsed::Primary);

        let mut csv = Vec::new();
        write_records_csv(&eval.records, &mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("run_id,t_index,tau,node,matched,window_used,S_t,D_global,D_local\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn persisted_embeddings_reproduce_alignment() {
        let run = run_with(&[("crew enters capsule today", 5.0, 0, vec![])]);
        let test = EventStream::new(
            vec![Event::new(4.0, id(0), "capsule hatch closes"), Event::new(9.0, id(0), "crew waves today")],
            DateTime::UNIX_EPOCH,
            100.0,
            2,
        )
        .unwrap();
        let eval = evaluate_run(&run, "r0", &test, &MockEmbedder::default(), MatchWindows::default()).unwrap();
        let mut buf = Vec::new();
        write_embeddings_jsonl(&eval.embeddings, &mut buf).unwrap();
        let back = read_embeddings_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, eval.embeddings);
        let refs = [back["capsule hatch closes"].clone(), back["crew waves today"].clone()];
        let s = semantic_alignment(&back["crew enters capsule today"], &refs).unwrap();
        assert_eq!(s.to_bits(), eval.records[0].s_t.unwrap().to_bits());
    }

    #[test]
    fn degenerate_text_reported_not_fatal() {
        let run = run_with(&[("...", 5.0, 0, vec![]), ("moon rocket", 6.0, 0, vec![])]);
        let test = EventStream::new(vec![Event::new(5.0, id(0), "moon")], DateTime::UNIX_EPOCH, 10.0, 2).unwrap();
        let eval = evaluate_run(&run, "r0", &test, &MockEmbedder::default(), MatchWindows::default()).unwrap();
        assert!(eval.records[0].s_t.is_none());
        assert!(eval.records[0].note.as_deref().unwrap().contains("degenerate"));
        assert!(eval.records[1].s_t.is_some());
    }
}
