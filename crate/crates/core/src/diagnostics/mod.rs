//! Held-out matching, semantic alignment, drift decomposition and
//! run summaries.

mod evaluate;
mod metrics;
mod summary;

use thiserror::Error;

pub use evaluate::{
    evaluate_run, read_embeddings_jsonl, write_embeddings_jsonl, write_records_csv, DiagnosticsRecord,
    RunEvaluation,
};
pub use metrics::{
    cosine, global_drift, late_stage, local_drift, match_references, moving_average, semantic_alignment,
    trend, MatchResult, MatchWindows, Trend, TrendLabel, WindowUsed, DEFAULT_LATE_FRACTION,
    DEFAULT_TREND_EPSILON,
};
pub use summary::{
    aggregate, s_series, summarize_run, write_moving_average_csv, Aggregate, EvaluationSummary, MeanStd,
    PooledStats, RunSummary, SummaryOptions, MOVING_AVERAGE_WINDOW,
};

use crate::text::TextError;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
    #[error("embedding dimension {got} does not match {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("io: {0}")]
    Io(String),
}

impl From<csv::Error> for DiagnosticsError {
    fn from(e: csv::Error) -> Self {
        DiagnosticsError::Io(e.to_string())
    }
}
