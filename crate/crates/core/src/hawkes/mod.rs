//! Multivariate exponential-kernel Hawkes process: evaluation, fitting and
//! stability assessment.

mod fit;
mod likelihood;
mod params;
mod spectral;

use thiserror::Error;

pub use fit::{
    default_beta_grid, fit, fit_grid, information_criteria, write_grid_csv, FitConfig, FitRecord,
    FitResult, GridFit, Penalty,
};
pub use likelihood::{
    compensator, decayed_state, intensity, log_likelihood, total_intensity, ExcitationFeatures,
};
pub(crate) use likelihood::intensity_from_state;
pub use params::HawkesParams;
pub use spectral::spectral_radius;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("node {node} is outside 1..={node_count}")]
    InvalidNode { node: u32, node_count: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("no stable fit on the decay grid ({} candidates)", all.len())]
    NoStableModel { all: Vec<FitResult> },
}
