//! Configuration, file layout and the ingest / fit / simulate / evaluate /
//! report commands.

mod commands;
mod config;
mod report;

use thiserror::Error;

pub use commands::{
    cmd_evaluate, cmd_fit, cmd_ingest, cmd_report, cmd_simulate, load_summaries, print, IngestReport, NodeCount,
    RunManifest,
};
pub use config::{
    run_id, FetchConfig, IngestConfig, Layout, Overrides, PathsConfig, PipelineConfig, PolicySelection, BASE_URL_ENV,
};
pub use report::{Report, ReportRow};

use crate::cascade::CascadeError;
use crate::diagnostics::DiagnosticsError;
use crate::event_stream::IngestError;
use crate::hawkes::HawkesError;
use crate::text::TextError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input error: {0}")]
    Input(String),
    #[error("{0}")]
    NoStableModel(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("degenerate output: {0}")]
    Degenerate(String),
    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Other(_) => 1,
            PipelineError::Input(_) => 2,
            PipelineError::NoStableModel(_) => 3,
            PipelineError::Transport(_) => 4,
            PipelineError::Degenerate(_) => 5,
        }
    }
}

impl From<IngestError> for PipelineError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Transport { .. } => PipelineError::Transport(e.to_string()),
            IngestError::Io(_) => PipelineError::Other(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<HawkesError> for PipelineError {
    fn from(e: HawkesError) -> Self {
        match e {
            HawkesError::NoStableModel { .. } => PipelineError::NoStableModel(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<TextError> for PipelineError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::Transport { .. } => PipelineError::Transport(e.to_string()),
            TextError::Degenerate(_) => PipelineError::Degenerate(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<CascadeError> for PipelineError {
    fn from(e: CascadeError) -> Self {
        match e {
            CascadeError::Hawkes(h) => h.into(),
            CascadeError::Io(_) => PipelineError::Other(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}

impl From<DiagnosticsError> for PipelineError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Text(t) => t.into(),
            DiagnosticsError::Io(_) => PipelineError::Other(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}
