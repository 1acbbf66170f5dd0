//! Intensity, compensator, and log-likelihood for the exponential kernel.
//!
//! With a single decay the excitation felt at time `s` from node `j` is
//! `alpha[j][i] * S_j(s)`, where `S_j(s) = sum_{tau_m < s, n_m = j} exp(-beta (s - tau_m))`.
//! `S` obeys the recursion `S(s') = S(s) exp(-beta (s' - s))` plus one unit per
//! new event, which keeps likelihood evaluation linear in the number of events.

use super::{HawkesError, HawkesParams};
use crate::event_stream::EventStream;
use crate::node::{Arrival, NodeId};

fn check_node(params: &HawkesParams, node: NodeId) -> Result<(), HawkesError> {
    if node.in_range(params.node_count()) {
        Ok(())
    } else {
        Err(HawkesError::InvalidNode { node: node.get(), node_count: params.node_count() })
    }
}

/// Per-source-node decayed event counts `S_j(s)` using events with `tau < s`.
pub fn decayed_state(
    params: &HawkesParams,
    projection: &[Arrival],
    s: f64,
) -> Result<Vec<f64>, HawkesError> {
    let mut state = vec![0.0; params.node_count()];
    for a in projection.iter().take_while(|a| a.tau < s) {
        check_node(params, a.node)?;
        state[a.node.index()] += (-params.beta * (s - a.tau)).exp();
    }
    Ok(state)
}

/// `mu_i + sum_j alpha[j][i] S_j` for a given decayed state.
pub(crate) fn intensity_from_state(params: &HawkesParams, state: &[f64], i: usize) -> f64 {
    let excitation: f64 = state
        .iter()
        .zip(&params.alpha)
        .zip(&params.edge_mask)
        .filter(|(_, mask)| mask[i])
        .map(|((s, row), _)| row[i] * s)
        .sum();
    params.mu[i] + excitation
}

/// Conditional intensity of `node` at time `s`, given a projection sorted by
/// time. Events at or after `s` do not contribute.
pub fn intensity(
    params: &HawkesParams,
    projection: &[Arrival],
    node: NodeId,
    s: f64,
) -> Result<f64, HawkesError> {
    check_node(params, node)?;
    let state = decayed_state(params, projection, s)?;
    Ok(intensity_from_state(params, &state, node.index()))
}

/// Sum of the per-node intensities at `s`.
pub fn total_intensity(params: &HawkesParams, projection: &[Arrival], s: f64) -> Result<f64, HawkesError> {
    let state = decayed_state(params, projection, s)?;
    Ok((0..params.node_count())
        .map(|i| intensity_from_state(params, &state, i))
        .sum())
}

/// Closed-form `int_0^T lambda_i(s) ds` for every node `i`.
pub fn compensator(params: &HawkesParams, projection: &[Arrival], horizon: f64) -> Result<Vec<f64>, HawkesError> {
    let n = params.node_count();
    let mut mass = vec![0.0; n];
    for a in projection {
        check_node(params, a.node)?;
        if a.tau < 0.0 || a.tau > horizon {
            return Err(HawkesError::Domain(format!("event at tau={} lies outside [0, {horizon}]", a.tau)));
        }
        mass[a.node.index()] += -(-params.beta * (horizon - a.tau)).exp_m1() / params.beta;
    }
    Ok((0..n)
        .map(|i| {
            let excitation: f64 = (0..n)
                .filter(|&j| params.edge_mask[j][i])
                .map(|j| params.alpha[j][i] * mass[j])
                .sum();
            params.mu[i] * horizon + excitation
        })
        .collect())
}

/// Sufficient statistics of a stream for a fixed decay: the decayed state
/// just before each event, and each source node's integrated kernel mass
/// over the horizon.
#[derive(Debug, Clone)]
pub struct ExcitationFeatures {
    pub beta: f64,
    pub horizon: f64,
    pub node_count: usize,
    /// `(target node index, S(tau_m^-))` per event.
    pub rows: Vec<(usize, Vec<f64>)>,
    /// `sum_{n_m = j} (1 - exp(-beta (T - tau_m))) / beta`.
    pub kernel_mass: Vec<f64>,
    pub counts: Vec<usize>,
}

impl ExcitationFeatures {
    pub fn new(stream: &EventStream, beta: f64) -> Result<Self, HawkesError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(HawkesError::Params(format!("beta must be positive, got {beta}")));
        }
        let n = stream.node_count;
        let horizon = stream.horizon_hours;
        let mut state = vec![0.0; n];
        let mut last_tau = 0.0;
        let mut rows = Vec::with_capacity(stream.len());
        let mut kernel_mass = vec![0.0; n];
        let mut counts = vec![0; n];
        for e in &stream.events {
            let j = e.node.index();
            if j >= n {
                return Err(HawkesError::InvalidNode { node: e.node.get(), node_count: n });
            }
            if e.tau > horizon {
                return Err(HawkesError::Domain(format!("event at tau={} beyond horizon {horizon}", e.tau)));
            }
            let decay = (-beta * (e.tau - last_tau)).exp();
            state.iter_mut().for_each(|s| *s *= decay);
            rows.push((j, state.clone()));
            state[j] += 1.0;
            last_tau = e.tau;
            kernel_mass[j] += -(-beta * (horizon - e.tau)).exp_m1() / beta;
            counts[j] += 1;
        }
        Ok(Self { beta, horizon, node_count: n, rows, kernel_mass, counts })
    }

    /// Log-likelihood contribution of target node `i` for background `mu_i`
    /// and incoming excitation column `alpha_col[j] = alpha[j][i]`.
    /// Returns `-inf` if some event of `i` sees zero intensity.
    pub fn node_log_likelihood(&self, i: usize, mu_i: f64, alpha_col: &[f64]) -> f64 {
        let mut ll = 0.0;
        for (target, state) in &self.rows {
            if *target != i {
                continue;
            }
            let rate = mu_i + state.iter().zip(alpha_col).map(|(s, a)| s * a).sum::<f64>();
            if rate <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += rate.ln();
        }
        let integral = mu_i * self.horizon
            + self.kernel_mass.iter().zip(alpha_col).map(|(k, a)| k * a).sum::<f64>();
        ll - integral
    }

    pub fn log_likelihood(&self, params: &HawkesParams) -> f64 {
        (0..self.node_count)
            .map(|i| {
                let col: Vec<f64> = (0..self.node_count)
                    .map(|j| if params.edge_mask[j][i] { params.alpha[j][i] } else { 0.0 })
                    .collect();
                self.node_log_likelihood(i, params.mu[i], &col)
            })
            .sum()
    }
}

/// `sum_m log lambda_{n_m}(tau_m^-) - sum_i int_0^T lambda_i`.
///
/// A zero intensity at an event yields `f64::NEG_INFINITY` rather than an error.
pub fn log_likelihood(params: &HawkesParams, stream: &EventStream) -> Result<f64, HawkesError> {
    if stream.node_count != params.node_count() {
        return Err(HawkesError::Params(format!(
            "stream has {} nodes, parameters have {}",
            stream.node_count,
            params.node_count()
        )));
    }
    Ok(ExcitationFeatures::new(stream, params.beta)?.log_likelihood(params))
}
