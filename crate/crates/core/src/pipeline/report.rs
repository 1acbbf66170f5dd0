use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::diagnostics::{EvaluationSummary, MeanStd};

/// One policy's row in the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub run_count: usize,
    pub matched_count: usize,
    pub primary_match_count: usize,
    pub relaxed_match_count: usize,
    pub mean_s: Option<f64>,
    pub mean_s_std: Option<f64>,
    pub trend: Option<String>,
    pub slope: Option<f64>,
    pub late_stage_s: Option<f64>,
    pub late_stage_s_std: Option<f64>,
    pub mean_global_drift: Option<f64>,
    pub mean_global_drift_std: Option<f64>,
    pub mean_local_drift: Option<f64>,
    pub mean_local_drift_std: Option<f64>,
    pub pooled_mean_s: Option<f64>,
    pub pooled_trend: Option<String>,
    pub pooled_late_stage_s: Option<f64>,
}

impl ReportRow {
    pub fn from_summary(s: &EvaluationSummary) -> Self {
        let a = &s.aggregate;
        let split = |m: Option<MeanStd>| (m.map(|m| m.mean), m.map(|m| m.std));
        let (mean_s, mean_s_std) = split(a.mean_s);
        let (late_stage_s, late_stage_s_std) = split(a.late_stage_s);
        let (mean_global_drift, mean_global_drift_std) = split(a.mean_global_drift);
        let (mean_local_drift, mean_local_drift_std) = split(a.mean_local_drift);
        Self {
            policy: s.policy.clone(),
            run_count: a.run_count,
            matched_count: a.matched_count,
            primary_match_count: a.primary_match_count,
            relaxed_match_count: a.relaxed_match_count,
            mean_s,
            mean_s_std,
            trend: a.trend.map(|t| t.as_str().to_string()),
            slope: a.slope.map(|s| s.mean),
            late_stage_s,
            late_stage_s_std,
            mean_global_drift,
            mean_global_drift_std,
            mean_local_drift,
            mean_local_drift_std,
            pooled_mean_s: a.pooled.mean_s,
            pooled_trend: a.pooled.trend.map(|t| t.label.as_str().to_string()),
            pooled_late_stage_s: a.pooled.late_stage_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

fn pm(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
        (Some(m), None) => format!("{m:.3}"),
        _ => "n/a".into(),
    }
}

impl Report {
    /// Rows keep the order of `summaries`.
    pub fn from_summaries(summaries: &[EvaluationSummary]) -> Self {
        Self { rows: summaries.iter().map(ReportRow::from_summary).collect() }
    }

    pub fn to_text(&self) -> String {
        let header = ["Policy", "Mean S_t", "Trend", "Late-stage", "D_global", "D_local", "Runs", "Matched (12h/24h)"];
        let cells: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.policy.clone(),
                    pm(r.mean_s, r.mean_s_std),
                    r.trend.clone().unwrap_or_else(|| "n/a".into()),
                    pm(r.late_stage_s, r.late_stage_s_std),
                    pm(r.mean_global_drift, r.mean_global_drift_std),
                    pm(r.mean_local_drift, r.mean_local_drift_std),
                    r.run_count.to_string(),
                    format!("{} ({}/{})", r.matched_count, r.primary_match_count, r.relaxed_match_count),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|row| row[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, row: &[&str]| {
            let padded: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&mut out, &header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
        for row in &cells {
            line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| PipelineError::Other(e.to_string()))?;
        }
        w.flush().map_err(|e| PipelineError::Other(e.to_string()))
    }

    pub fn read_csv(text: &str) -> Result<Self, PipelineError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r
            .deserialize()
            .collect::<Result<Vec<ReportRow>, _>>()
            .map_err(|e| PipelineError::Input(e.to_string()))?;
        Ok(Self { rows })
    }
}
