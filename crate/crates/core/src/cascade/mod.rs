//! Event sampling by thinning and the text-generating cascade loop.

mod run;
mod thinning;

use thiserror::Error;

pub use run::{
    derive_run_seed, load_run, make_policy, run_cascade, run_meta_path, run_prompts_path, save_run,
    stream_rng, CascadeRun, DegeneratePolicy, RunConfig, RunLine, RunMeta, StopReason,
    PLACEHOLDER_TEXT,
};
pub use thinning::{sample_next_event, simulate, ThinningSampler, EXTINCTION_RATE};

use crate::hawkes::HawkesError;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("total intensity vanished at {at} with no background rate")]
    RateExtinct { at: f64 },
    #[error(transparent)]
    Hawkes(#[from] HawkesError),
    #[error("io: {0}")]
    Io(String),
    #[error("decode: {0}")]
    Decode(String),
}
