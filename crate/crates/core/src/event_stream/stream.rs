use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{IngestError, NodeTaxonomy, RawRecord};
use crate::node::{Arrival, NodeId};

/// One second, in hours.
pub const DEFAULT_TIE_OFFSET_HOURS: f64 = 1.0 / 3600.0;

/// A timestamped, node-labeled text item. The same type carries observed
/// articles and generated cascade events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Hours since the stream origin.
    pub tau: f64,
    pub node: NodeId,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl Event {
    pub fn new(tau: f64, node: NodeId, text: impl Into<String>) -> Self {
        Self {
            tau,
            node,
            text: text.into(),
            domain: None,
            url: None,
        }
    }

    pub fn arrival(&self) -> Arrival {
        Arrival::new(self.tau, self.node)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    /// Sorted by strictly increasing `tau`.
    pub events: Vec<Event>,
    pub origin: DateTime<Utc>,
    /// Observation horizon `T`; every event lies in `[0, T]`.
    pub horizon_hours: f64,
    pub node_count: usize,
}

impl EventStream {
    pub fn new(
        events: Vec<Event>,
        origin: DateTime<Utc>,
        horizon_hours: f64,
        node_count: usize,
    ) -> Result<Self, IngestError> {
        let stream = Self {
            events,
            origin,
            horizon_hours,
            node_count,
        };
        stream.validate()?;
        Ok(stream)
    }

    /// Wraps a bare node-time sequence (e.g. a simulated stream) with empty texts.
    pub fn from_arrivals(
        arrivals: &[Arrival],
        horizon_hours: f64,
        node_count: usize,
    ) -> Result<Self, IngestError> {
        let events = arrivals
            .iter()
            .map(|a| Event::new(a.tau, a.node, String::new()))
            .collect();
        Self::new(events, DateTime::UNIX_EPOCH, horizon_hours, node_count)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.horizon_hours.is_finite() && self.horizon_hours > 0.0) {
            return Err(IngestError::Stream(format!(
                "horizon must be positive, got {}",
                self.horizon_hours
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for (m, e) in self.events.iter().enumerate() {
            if !(e.tau >= 0.0 && e.tau <= self.horizon_hours) {
                return Err(IngestError::Stream(format!(
                    "event {m} at tau={} lies outside [0, {}]",
                    e.tau, self.horizon_hours
                )));
            }
            if e.tau <= prev {
                return Err(IngestError::Stream(format!("event {m} does not strictly follow its predecessor")));
            }
            if !e.node.in_range(self.node_count) {
                return Err(IngestError::Stream(format!("event {m} has node {} outside 1..={}", e.node, self.node_count)));
            }
            prev = e.tau;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn arrivals(&self) -> Vec<Arrival> {
        self.events.iter().map(Event::arrival).collect()
    }

    pub fn node_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.node_count];
        for e in &self.events {
            counts[e.node.index()] += 1;
        }
        counts
    }
}

/// Sorts records chronologically, assigns nodes, and converts timestamps to
/// hours since the earliest record. The g-th member (0-based) of a group of
/// identical timestamps is shifted by `g * tie_offset`; if offsets would run
/// into the next timestamp, later events are pushed just past their
/// predecessor so the result stays strictly increasing.
pub fn build_stream(
    records: &[RawRecord],
    taxonomy: &NodeTaxonomy,
    tie_offset: f64,
) -> Result<EventStream, IngestError> {
    if records.is_empty() {
        return Err(IngestError::EmptyInput { rejected: 0 });
    }
    if !(tie_offset.is_finite() && tie_offset > 0.0) {
        return Err(IngestError::Stream(format!("tie offset must be positive, got {tie_offset}")));
    }
    let mut sorted: Vec<&RawRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.timestamp);
    let origin = sorted[0].timestamp;

    let mut events = Vec::with_capacity(sorted.len());
    let mut group_rank = 0usize;
    let mut prev_ts = None;
    let mut prev_tau = f64::NEG_INFINITY;
    for record in sorted {
        if prev_ts == Some(record.timestamp) {
            group_rank += 1;
        } else {
            group_rank = 0;
        }
        prev_ts = Some(record.timestamp);
        let base = hours_between(origin, record.timestamp);
        let mut tau = base + group_rank as f64 * tie_offset;
        if tau <= prev_tau {
            tau = prev_tau + tie_offset;
        }
        prev_tau = tau;
        events.push(Event {
            tau,
            node: taxonomy.assign(&record.domain)?,
            text: record.title.clone(),
            domain: Some(record.domain.clone()),
            url: Some(record.url.clone()),
        });
    }
    let horizon = prev_tau + tie_offset;
    EventStream::new(events, origin, horizon, taxonomy.node_count())
}

fn hours_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    let delta = to - from;
    match delta.num_microseconds() {
        Some(us) => us as f64 / 3.6e9,
        None => delta.num_seconds() as f64 / 3600.0,
    }
}

/// Number of leading events that go to the training side.
pub fn train_count(len: usize, train_fraction: f64) -> usize {
    // 0.8 * 248 = 198.4 must give 198; the epsilon absorbs products like 0.29 * 100
    (train_fraction * len as f64 + 1e-9).floor() as usize
}

/// Splits without shuffling. Both halves keep the original origin and tau
/// values. The training horizon closes at the first test event; the test
/// half keeps the full horizon.
pub fn chronological_split(
    stream: &EventStream,
    train_fraction: f64,
) -> Result<(EventStream, EventStream), IngestError> {
    if stream.len() < 2 {
        return Err(IngestError::Split(format!("need at least 2 events, have {}", stream.len())));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(IngestError::Split(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let n_train = train_count(stream.len(), train_fraction);
    if n_train == 0 || n_train == stream.len() {
        return Err(IngestError::Split(format!(
            "fraction {train_fraction} of {} events leaves one side empty",
            stream.len()
        )));
    }
    let (train_events, test_events) = stream.events.split_at(n_train);
    let train_horizon = test_events[0].tau;
    let train = EventStream {
        events: train_events.to_vec(),
        origin: stream.origin,
        horizon_hours: train_horizon,
        node_count: stream.node_count,
    };
    let test = EventStream {
        events: test_events.to_vec(),
        origin: stream.origin,
        horizon_hours: stream.horizon_hours,
        node_count: stream.node_count,
    };
    Ok((train, test))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamMeta {
    pub origin: DateTime<Utc>,
    pub horizon_hours: f64,
    pub node_count: usize,
    pub event_count: usize,
}

pub fn meta_path(events_path: &Path) -> PathBuf {
    events_path.with_extension("meta.json")
}

/// Writes `path` as JSONL (one event per line) plus a `.meta.json` sidecar
/// holding origin and horizon.
pub fn save_stream(stream: &EventStream, path: &Path) -> Result<(), IngestError> {
    let io = |e: std::io::Error| IngestError::Io(format!("{}: {e}", path.display()));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for event in &stream.events {
        let line = serde_json::to_string(event).map_err(|e| IngestError::Io(e.to_string()))?;
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)?;
    let meta = StreamMeta {
        origin: stream.origin,
        horizon_hours: stream.horizon_hours,
        node_count: stream.node_count,
        event_count: stream.len(),
    };
    let meta_json = serde_json::to_string_pretty(&meta).map_err(|e| IngestError::Io(e.to_string()))?;
    std::fs::write(meta_path(path), meta_json + "\n").map_err(io)
}

pub fn load_stream(path: &Path) -> Result<EventStream, IngestError> {
    let io = |e: std::io::Error| IngestError::Io(format!("{}: {e}", path.display()));
    let meta_file = meta_path(path);
    let meta: StreamMeta = serde_json::from_str(
        &std::fs::read_to_string(&meta_file).map_err(|e| IngestError::Io(format!("{}: {e}", meta_file.display())))?,
    )
    .map_err(|e| IngestError::Stream(format!("{}: {e}", meta_file.display())))?;
    let file = std::fs::File::open(path).map_err(io)?;
    let mut events = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line)
            .map_err(|e| IngestError::Stream(format!("{} line {}: {e}", path.display(), i + 1)))?;
        events.push(event);
    }
    EventStream::new(events, meta.origin, meta.horizon_hours, meta.node_count)
}
