use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::evaluate::DiagnosticsRecord;
use super::metrics::{late_stage, moving_average, trend, Trend, TrendLabel, WindowUsed};
use super::DiagnosticsError;

pub const MOVING_AVERAGE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryOptions {
    pub trend_epsilon: f64,
    pub late_fraction: f64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self { trend_epsilon: super::DEFAULT_TREND_EPSILON, late_fraction: super::DEFAULT_LATE_FRACTION }
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub event_count: usize,
    pub matched_count: usize,
    pub primary_match_count: usize,
    pub relaxed_match_count: usize,
    /// S statistics cover matched events only and are absent without matches.
    pub mean_s: Option<f64>,
    pub trend: Option<Trend>,
    pub late_stage_s: Option<f64>,
    pub mean_global_drift: Option<f64>,
    pub mean_local_drift: Option<f64>,
    pub local_drift_count: usize,
    /// Keyed by node id.
    pub per_node_global_drift: BTreeMap<u32, f64>,
    pub per_node_local_drift: BTreeMap<u32, f64>,
}

fn per_node(records: &[DiagnosticsRecord], value: impl Fn(&DiagnosticsRecord) -> Option<f64>) -> BTreeMap<u32, f64> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(v) = value(r) {
            groups.entry(r.node.get()).or_default().push(v);
        }
    }
    groups.into_iter().filter_map(|(node, vs)| mean(&vs).map(|m| (node, m))).collect()
}

/// Matched S values in step order.
pub fn s_series(records: &[DiagnosticsRecord]) -> Vec<f64> {
    records.iter().filter_map(|r| r.s_t).collect()
}

pub fn summarize_run(run_id: &str, records: &[DiagnosticsRecord], options: SummaryOptions) -> RunSummary {
    let s = s_series(records);
    let global: Vec<f64> = records.iter().filter_map(|r| r.d_global).collect();
    let local: Vec<f64> = records.iter().filter_map(|r| r.d_local).collect();
    let count = |w: WindowUsed| records.iter().filter(|r| r.window_used == w).count();
    RunSummary {
        run_id: run_id.to_string(),
        event_count: records.len(),
        matched_count: records.iter().filter(|r| r.matched).count(),
        primary_match_count: count(WindowUsed::Primary),
        relaxed_match_count: count(WindowUsed::Relaxed),
        mean_s: mean(&s),
        trend: trend(&s, options.trend_epsilon).ok(),
        late_stage_s: late_stage(&s, options.late_fraction),
        mean_global_drift: mean(&global),
        mean_local_drift: mean(&local),
        local_drift_count: local.len(),
        per_node_global_drift: per_node(records, |r| r.d_global),
        per_node_local_drift: per_node(records, |r| r.d_local),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let m = mean(values)?;
        let n = values.len();
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean: m, std, n })
    }
}

/// Statistics over all matched events of all runs taken as one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledStats {
    pub mean_s: Option<f64>,
    pub trend: Option<Trend>,
    pub late_stage_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub run_count: usize,
    pub single_run: bool,
    pub matched_count: usize,
    pub primary_match_count: usize,
    pub relaxed_match_count: usize,
    /// Across-run statistics of per-run values.
    pub mean_s: Option<MeanStd>,
    pub slope: Option<MeanStd>,
    /// Label of the mean per-run slope.
    pub trend: Option<TrendLabel>,
    pub late_stage_s: Option<MeanStd>,
    pub mean_global_drift: Option<MeanStd>,
    pub mean_local_drift: Option<MeanStd>,
    pub per_node_global_drift: BTreeMap<u32, f64>,
    pub per_node_local_drift: BTreeMap<u32, f64>,
    pub pooled: PooledStats,
}

pub fn aggregate(runs: &[RunSummary], records: &[DiagnosticsRecord], options: SummaryOptions) -> Aggregate {
    let collect = |f: &dyn Fn(&RunSummary) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(f).collect() };
    let slope = MeanStd::of(&collect(&|r| r.trend.map(|t| t.slope)));
    let pooled_s = s_series(records);
    Aggregate {
        run_count: runs.len(),
        single_run: runs.len() == 1,
        matched_count: runs.iter().map(|r| r.matched_count).sum(),
        primary_match_count: runs.iter().map(|r| r.primary_match_count).sum(),
        relaxed_match_count: runs.iter().map(|r| r.relaxed_match_count).sum(),
        mean_s: MeanStd::of(&collect(&|r| r.mean_s)),
        trend: slope.map(|s| TrendLabel::from_slope(s.mean, options.trend_epsilon)),
        slope,
        late_stage_s: MeanStd::of(&collect(&|r| r.late_stage_s)),
        mean_global_drift: MeanStd::of(&collect(&|r| r.mean_global_drift)),
        mean_local_drift: MeanStd::of(&collect(&|r| r.mean_local_drift)),
        per_node_global_drift: per_node(records, |r| r.d_global),
        per_node_local_drift: per_node(records, |r| r.d_local),
        pooled: PooledStats {
            mean_s: mean(&pooled_s),
            trend: trend(&pooled_s, options.trend_epsilon).ok(),
            late_stage_s: late_stage(&pooled_s, options.late_fraction),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub policy: String,
    pub embedder_id: String,
    pub options: SummaryOptions,
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

impl EvaluationSummary {
    pub fn build(
        policy: &str,
        embedder_id: &str,
        per_run: &[(String, Vec<DiagnosticsRecord>)],
        options: SummaryOptions,
    ) -> Self {
        let runs: Vec<RunSummary> = per_run.iter().map(|(id, recs)| summarize_run(id, recs, options)).collect();
        let all: Vec<DiagnosticsRecord> = per_run.iter().flat_map(|(_, recs)| recs.iter().cloned()).collect();
        Self {
            policy: policy.to_string(),
            embedder_id: embedder_id.to_string(),
            options,
            aggregate: aggregate(&runs, &all, options),
            runs,
        }
    }
}

#[derive(Serialize)]
struct MovingAverageRow<'a> {
    run_id: &'a str,
    ordinal: usize,
    t_index: usize,
    tau: f64,
    #[serde(rename = "S_t")]
    s_t: f64,
    #[serde(rename = "S_t_ma")]
    s_t_ma: f64,
}

/// Per run, the matched S series with its trailing moving average.
pub fn write_moving_average_csv<W: Write>(
    records: &[DiagnosticsRecord],
    window: usize,
    out: W,
) -> Result<(), DiagnosticsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut runs: Vec<&str> = Vec::new();
    for r in records {
        if !runs.contains(&r.run_id.as_str()) {
            runs.push(&r.run_id);
        }
    }
    for run_id in runs {
        let matched: Vec<&DiagnosticsRecord> =
            records.iter().filter(|r| r.run_id == run_id && r.s_t.is_some()).collect();
        let series: Vec<f64> = matched.iter().filter_map(|r| r.s_t).collect();
        let ma = moving_average(&series, window);
        for (ordinal, (r, avg)) in matched.iter().zip(ma).enumerate() {
            w.serialize(MovingAverageRow {
                run_id,
                ordinal,
                t_index: r.t_index,
                tau: r.tau,
                s_t: series[ordinal],
                s_t_ma: avg,
            })?;
        }
    }
    w.flush().map_err(|e| DiagnosticsError::Io(e.to_string()))
}
