use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::event_stream::{Event, EventStream};
use crate::memory::Memory;
use crate::text::EmbeddingVector;

pub const DEFAULT_TREND_EPSILON: f64 = 1e-3;
pub const DEFAULT_LATE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchWindows {
    pub primary_hours: f64,
    pub relaxed_hours: f64,
}

impl Default for MatchWindows {
    fn default() -> Self {
        Self { primary_hours: 12.0, relaxed_hours: 24.0 }
    }
}

impl MatchWindows {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        if !(self.primary_hours > 0.0 && self.primary_hours <= self.relaxed_hours && self.relaxed_hours.is_finite()) {
            return Err(DiagnosticsError::Precondition(format!(
                "match windows need 0 < primary ({}) <= relaxed ({})",
                self.primary_hours, self.relaxed_hours
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WindowUsed {
    #[serde(rename = "primary_12h")]
    Primary,
    #[serde(rename = "relaxed_24h")]
    Relaxed,
    #[serde(rename = "none")]
    None,
}

impl WindowUsed {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowUsed::Primary => "primary_12h",
            WindowUsed::Relaxed => "relaxed_24h",
            WindowUsed::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub generated_index: usize,
    /// Positions in the test stream.
    pub reference_indices: Vec<usize>,
    pub references: Vec<Event>,
    pub window_used: WindowUsed,
}

/// Same-node test events within the primary window of the generated event,
/// falling back to the relaxed window when the primary one is empty.
pub fn match_references(generated_index: usize, gen: &Event, test: &EventStream, windows: MatchWindows) -> MatchResult {
    let within = |width: f64| -> Vec<usize> {
        test.events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.node == gen.node && (e.tau - gen.tau).abs() <= width)
            .map(|(i, _)| i)
            .collect()
    };
    let (reference_indices, window_used) = match within(windows.primary_hours) {
        hits if !hits.is_empty() => (hits, WindowUsed::Primary),
        _ => match within(windows.relaxed_hours) {
            hits if !hits.is_empty() => (hits, WindowUsed::Relaxed),
            _ => (Vec::new(), WindowUsed::None),
        },
    };
    MatchResult {
        generated_index,
        references: reference_indices.iter().map(|&i| test.events[i].clone()).collect(),
        reference_indices,
        window_used,
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, DiagnosticsError> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::DimMismatch { expected: a.len(), got: b.len() });
    }
    let (na, nb) = (norm_sq(a), norm_sq(b));
    if na == 0.0 || nb == 0.0 {
        return Err(DiagnosticsError::DegenerateEmbedding("zero-norm vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // sqrt(fl(x * x)) == x, so identical inputs give exactly 1
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine between the generated vector and the mean reference vector.
pub fn semantic_alignment(gen: &EmbeddingVector, refs: &[EmbeddingVector]) -> Result<f64, DiagnosticsError> {
    if refs.is_empty() {
        return Err(DiagnosticsError::Precondition("semantic alignment needs at least one reference".into()));
    }
    let mut mean = vec![0.0; gen.dim()];
    for r in refs {
        if r.dim() != gen.dim() {
            return Err(DiagnosticsError::DimMismatch { expected: gen.dim(), got: r.dim() });
        }
        mean.iter_mut().zip(&r.values).for_each(|(m, v)| *m += v);
    }
    let count = refs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    cosine(&gen.values, &mean)
}

pub fn global_drift(gen: &EmbeddingVector, seed: &EmbeddingVector) -> Result<f64, DiagnosticsError> {
    Ok(1.0 - cosine(&gen.values, &seed.values)?)
}

/// `1 - cos(gen, sum_j w_j z(rep_j))`; `None` for an empty memory.
/// `history_vecs[m]` is the embedding of history event `m` (0 is the seed).
pub fn local_drift(
    gen: &EmbeddingVector,
    memory: &Memory,
    history_vecs: &[EmbeddingVector],
) -> Result<Option<f64>, DiagnosticsError> {
    if memory.is_empty() {
        return Ok(None);
    }
    let mut centroid = vec![0.0; gen.dim()];
    for item in &memory.items {
        let z = history_vecs.get(item.rep_index).ok_or_else(|| {
            DiagnosticsError::Precondition(format!("memory refers to unembedded history event {}", item.rep_index))
        })?;
        if z.dim() != gen.dim() {
            return Err(DiagnosticsError::DimMismatch { expected: gen.dim(), got: z.dim() });
        }
        centroid.iter_mut().zip(&z.values).for_each(|(c, v)| *c += item.weight * v);
    }
    Ok(Some(1.0 - cosine(&gen.values, &centroid)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendLabel {
    Increasing,
    Decreasing,
    Flat,
}

impl TrendLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrendLabel::Increasing => "increasing",
            TrendLabel::Decreasing => "decreasing",
            TrendLabel::Flat => "flat",
        }
    }

    pub fn from_slope(slope: f64, epsilon: f64) -> Self {
        if slope > epsilon {
            TrendLabel::Increasing
        } else if slope < -epsilon {
            TrendLabel::Decreasing
        } else {
            TrendLabel::Flat
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub label: TrendLabel,
    pub slope: f64,
}

/// Least-squares slope of the series against its ordinal position.
pub fn trend(series: &[f64], epsilon: f64) -> Result<Trend, DiagnosticsError> {
    let n = series.len();
    if n < 2 {
        return Err(DiagnosticsError::InsufficientData { needed: 2, got: n });
    }
    let x_mean = (n - 1) as f64 / 2.0;
    let y_mean = series.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in series.iter().enumerate() {
        let dx = x as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(Trend { label: TrendLabel::from_slope(slope, epsilon), slope })
}

/// Mean of the last `ceil(fraction * n)` values (at least one).
pub fn late_stage(series: &[f64], fraction: f64) -> Option<f64> {
    if series.is_empty() {
        return None;
    }
    let take = ((fraction * series.len() as f64 - 1e-9).ceil() as usize).clamp(1, series.len());
    let tail = &series[series.len() - take..];
    Some(tail.iter().sum::<f64>() / take as f64)
}

/// Trailing moving average; the first `window - 1` entries average what is
/// available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &series[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}
