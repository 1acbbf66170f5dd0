//! Penalized maximum likelihood for a fixed decay, and decay-grid selection
//! subject to stability.
//!
//! The objective separates over target nodes: node `i` owns `mu_i` and the
//! incoming column `alpha[.][i]`, and its term is
//! `sum_{n_m = i} log(mu_i + sum_j alpha[j][i] S_j(tau_m^-)) - mu_i T - sum_j alpha[j][i] K_j`.
//! Each block is concave; it is maximized by projected gradient ascent with
//! Barzilai–Borwein step proposals and Armijo backtracking, so every accepted
//! step increases the penalized objective.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::likelihood::ExcitationFeatures;
use super::{spectral_radius, HawkesError, HawkesParams};
use crate::event_stream::EventStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    None,
    /// `sum alpha^2`
    #[default]
    SquaredMagnitude,
    /// `sum |alpha|`
    AbsoluteMagnitude,
}

impl Penalty {
    fn value(self, alpha: &[f64]) -> f64 {
        match self {
            Penalty::None => 0.0,
            Penalty::SquaredMagnitude => alpha.iter().map(|a| a * a).sum(),
            Penalty::AbsoluteMagnitude => alpha.iter().map(|a| a.abs()).sum(),
        }
    }

    /// Derivative on the nonnegative orthant.
    fn gradient(self, a: f64) -> f64 {
        match self {
            Penalty::None => 0.0,
            Penalty::SquaredMagnitude => 2.0 * a,
            Penalty::AbsoluteMagnitude => 1.0,
        }
    }
}

/// Eight decay values from 1/72 to 1/6 per hour.
pub fn default_beta_grid() -> Vec<f64> {
    [72.0, 48.0, 36.0, 24.0, 18.0, 12.0, 9.0, 6.0]
        .iter()
        .map(|h| 1.0 / h)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub beta_grid: Vec<f64>,
    pub eta: f64,
    pub penalty: Penalty,
    pub max_iterations: usize,
    pub convergence_tolerance: f64,
    /// Allowed influences; `None` means every edge, including self-loops.
    pub edge_mask: Option<Vec<Vec<bool>>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            beta_grid: default_beta_grid(),
            eta: 0.0,
            penalty: Penalty::default(),
            max_iterations: 20_000,
            convergence_tolerance: 1e-6,
            edge_mask: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), HawkesError> {
        if self.beta_grid.is_empty() {
            return Err(HawkesError::Params("beta grid is empty".into()));
        }
        if let Some(b) = self.beta_grid.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(HawkesError::Params(format!("grid decay {b} is not positive")));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(HawkesError::Params(format!("penalty strength {} is negative", self.eta)));
        }
        if !(self.convergence_tolerance > 0.0) {
            return Err(HawkesError::Params("convergence tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: HawkesParams,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub spectral_radius: f64,
    pub stable: bool,
    pub param_count: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// On-disk form of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub beta: f64,
    pub mu: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub spectral_radius: f64,
    pub stable: bool,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_mask: Option<Vec<Vec<bool>>>,
    #[serde(default)]
    pub param_count: usize,
    #[serde(default)]
    pub iterations: usize,
}

impl From<&FitResult> for FitRecord {
    fn from(fit: &FitResult) -> Self {
        let full = fit.params.edge_mask.iter().flatten().all(|&b| b);
        Self {
            beta: fit.params.beta,
            mu: fit.params.mu.clone(),
            alpha: fit.params.alpha.clone(),
            log_likelihood: fit.log_likelihood,
            aic: fit.aic,
            bic: fit.bic,
            spectral_radius: fit.spectral_radius,
            stable: fit.stable,
            converged: fit.converged,
            edge_mask: (!full).then(|| fit.params.edge_mask.clone()),
            param_count: fit.param_count,
            iterations: fit.iterations,
        }
    }
}

impl TryFrom<FitRecord> for FitResult {
    type Error = HawkesError;

    fn try_from(r: FitRecord) -> Result<Self, Self::Error> {
        let n = r.mu.len();
        let mask = r.edge_mask.unwrap_or_else(|| vec![vec![true; n]; n]);
        let params = HawkesParams::with_mask(r.mu, r.alpha, r.beta, mask)?;
        let param_count = params.param_count();
        Ok(Self {
            params,
            log_likelihood: r.log_likelihood,
            aic: r.aic,
            bic: r.bic,
            spectral_radius: r.spectral_radius,
            stable: r.stable,
            param_count,
            converged: r.converged,
            iterations: r.iterations,
        })
    }
}

impl FitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FitRecord::from(self)).expect("fit record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HawkesError> {
        let record: FitRecord = serde_json::from_str(text).map_err(|e| HawkesError::Params(e.to_string()))?;
        record.try_into()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn load(path: &Path) -> Result<Self, HawkesError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HawkesError::Params(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// `aic = 2p - 2 ll`, `bic = p ln(M) - 2 ll`.
pub fn information_criteria(log_likelihood: f64, param_count: usize, event_count: f64) -> (f64, f64) {
    let p = param_count as f64;
    (2.0 * p - 2.0 * log_likelihood, p * event_count.ln() - 2.0 * log_likelihood)
}

struct NodeProblem<'a> {
    features: &'a ExcitationFeatures,
    target: usize,
    /// Source nodes whose excitation into `target` is free.
    free_sources: Vec<usize>,
    eta: f64,
    penalty: Penalty,
}

impl NodeProblem<'_> {
    fn dim(&self) -> usize {
        1 + self.free_sources.len()
    }

    fn column(&self, x: &[f64]) -> Vec<f64> {
        let mut col = vec![0.0; self.features.node_count];
        for (k, &j) in self.free_sources.iter().enumerate() {
            col[j] = x[1 + k];
        }
        col
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let ll = self.features.node_log_likelihood(self.target, x[0], &self.column(x));
        ll - self.eta * self.penalty.value(&x[1..])
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let f = self.features;
        let mut g = vec![0.0; self.dim()];
        for (target, state) in &f.rows {
            if *target != self.target {
                continue;
            }
            let rate = x[0]
                + self
                    .free_sources
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| x[1 + k] * state[j])
                    .sum::<f64>();
            let inv = 1.0 / rate;
            g[0] += inv;
            for (k, &j) in self.free_sources.iter().enumerate() {
                g[1 + k] += state[j] * inv;
            }
        }
        g[0] -= f.horizon;
        for (k, &j) in self.free_sources.iter().enumerate() {
            g[1 + k] -= f.kernel_mass[j] + self.eta * self.penalty.gradient(x[1 + k]);
        }
        g
    }
}

struct BlockSolution {
    x: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn project(v: f64) -> f64 {
    v.max(0.0)
}

fn inf_norm_projected_step(x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .map(|(xi, gi)| (project(xi + gi) - xi).abs())
        .fold(0.0, f64::max)
}

fn solve_block(problem: &NodeProblem<'_>, mut x: Vec<f64>, max_iterations: usize, tol: f64) -> BlockSolution {
    const ARMIJO: f64 = 1e-4;
    const MIN_STEP: f64 = 1e-20;
    const MAX_STEP: f64 = 1e20;

    let mut f = problem.objective(&x);
    let mut g = problem.gradient(&x);
    let mut step = 1.0 / g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut stalled = 0;

    for iteration in 0..max_iterations {
        if inf_norm_projected_step(&x, &g) <= tol {
            return BlockSolution { x, converged: true, iterations: iteration };
        }
        let mut accepted = None;
        while step >= MIN_STEP {
            let candidate: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| project(xi + step * gi)).collect();
            let f_new = problem.objective(&candidate);
            let ascent: f64 = g.iter().zip(candidate.iter().zip(&x)).map(|(gi, (c, xi))| gi * (c - xi)).sum();
            if f_new.is_finite() && f_new >= f + ARMIJO * ascent {
                accepted = Some((candidate, f_new));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // no ascent direction left at machine precision
            return BlockSolution { x, converged: true, iterations: iteration };
        };
        let g_new = problem.gradient(&x_new);
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..x.len() {
            let s = x_new[k] - x[k];
            ss += s * s;
            sy += s * (g_new[k] - g[k]);
        }
        step = if sy < 0.0 { (ss / -sy).clamp(MIN_STEP, MAX_STEP) } else { (step * 2.0).min(MAX_STEP) };

        let gain = f_new - f;
        stalled = if gain <= 1e-15 * f.abs().max(1.0) { stalled + 1 } else { 0 };
        x = x_new;
        f = f_new;
        g = g_new;
        if stalled >= 20 {
            return BlockSolution { x, converged: true, iterations: iteration + 1 };
        }
    }
    let converged = inf_norm_projected_step(&x, &g) <= tol;
    BlockSolution { x, converged, iterations: max_iterations }
}

/// Initial point: half the empirical rate as background, a small uniform
/// excitation on allowed edges.
fn initial_point(features: &ExcitationFeatures, target: usize, free: usize) -> Vec<f64> {
    let mut x = vec![0.01; 1 + free];
    x[0] = 0.5 * features.counts[target] as f64 / features.horizon;
    x
}

fn resolve_mask(config: &FitConfig, n: usize) -> Result<Vec<Vec<bool>>, HawkesError> {
    match &config.edge_mask {
        None => Ok(vec![vec![true; n]; n]),
        Some(mask) if mask.len() == n && mask.iter().all(|row| row.len() == n) => Ok(mask.clone()),
        Some(_) => Err(HawkesError::Params(format!("edge mask must be {n}x{n}"))),
    }
}

/// Maximizes the penalized log-likelihood over `(mu, alpha) >= 0` for a
/// fixed decay. Non-convergence is reported through `converged`.
pub fn fit(stream: &EventStream, beta: f64, config: &FitConfig) -> Result<FitResult, HawkesError> {
    if stream.is_empty() {
        return Err(HawkesError::Params("cannot fit an empty stream".into()));
    }
    let features = ExcitationFeatures::new(stream, beta)?;
    fit_features(&features, config)
}

fn fit_features(features: &ExcitationFeatures, config: &FitConfig) -> Result<FitResult, HawkesError> {
    config.validate()?;
    let n = features.node_count;
    let mask = resolve_mask(config, n)?;
    let mut mu = vec![0.0; n];
    let mut alpha = vec![vec![0.0; n]; n];
    let mut converged = true;
    let mut iterations = 0;
    for target in 0..n {
        let problem = NodeProblem {
            features,
            target,
            free_sources: (0..n).filter(|&j| mask[j][target]).collect(),
            eta: config.eta,
            penalty: config.penalty,
        };
        let x0 = initial_point(features, target, problem.free_sources.len());
        let solution = solve_block(&problem, x0, config.max_iterations, config.convergence_tolerance);
        converged &= solution.converged;
        iterations = iterations.max(solution.iterations);
        mu[target] = solution.x[0];
        for (k, &j) in problem.free_sources.iter().enumerate() {
            alpha[j][target] = solution.x[1 + k];
        }
    }
    let params = HawkesParams::with_mask(mu, alpha, features.beta, mask)?;
    let log_likelihood = features.log_likelihood(&params);
    let param_count = params.param_count();
    let (aic, bic) = information_criteria(log_likelihood, param_count, features.rows.len() as f64);
    let spectral_radius = spectral_radius(&params.excitation_matrix())?;
    Ok(FitResult {
        params,
        log_likelihood,
        aic,
        bic,
        spectral_radius,
        stable: spectral_radius < 1.0,
        param_count,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone)]
pub struct GridFit {
    pub best_stable: FitResult,
    pub all: Vec<FitResult>,
}

/// Fits every decay on the grid and keeps the highest-likelihood stable one.
pub fn fit_grid(stream: &EventStream, config: &FitConfig) -> Result<GridFit, HawkesError> {
    config.validate()?;
    if stream.is_empty() {
        return Err(HawkesError::Params("cannot fit an empty stream".into()));
    }
    let all = config
        .beta_grid
        .iter()
        .map(|&beta| fit(stream, beta, config))
        .collect::<Result<Vec<_>, _>>()?;
    let best = all
        .iter()
        .filter(|f| f.stable)
        .max_by(|a, b| a.log_likelihood.total_cmp(&b.log_likelihood))
        .cloned();
    match best {
        Some(best_stable) => Ok(GridFit { best_stable, all }),
        None => Err(HawkesError::NoStableModel { all }),
    }
}

/// CSV report: one row per decay with `beta, log_likelihood, spectral_radius, stable`.
pub fn write_grid_csv<W: Write>(fits: &[FitResult], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta", "log_likelihood", "spectral_radius", "stable"])?;
    for fit in fits {
        w.write_record([
            fit.params.beta.to_string(),
            fit.log_likelihood.to_string(),
            fit.spectral_radius.to_string(),
            fit.stable.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
