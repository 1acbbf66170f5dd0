use serde::{Deserialize, Serialize};

use super::HawkesError;

/// Exponential-kernel multivariate Hawkes parameters.
///
/// `alpha[j][i]` is the excitation from a node-`j` event onto node `i`,
/// `edge_mask[j][i]` says whether that influence is allowed at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub mu: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: f64,
    pub edge_mask: Vec<Vec<bool>>,
}

impl HawkesParams {
    /// Builds parameters over the complete graph (every edge allowed).
    pub fn new(mu: Vec<f64>, alpha: Vec<Vec<f64>>, beta: f64) -> Result<Self, HawkesError> {
        let n = mu.len();
        Self::with_mask(mu, alpha, beta, vec![vec![true; n]; n])
    }

    pub fn with_mask(
        mu: Vec<f64>,
        alpha: Vec<Vec<f64>>,
        beta: f64,
        edge_mask: Vec<Vec<bool>>,
    ) -> Result<Self, HawkesError> {
        let params = Self { mu, alpha, beta, edge_mask };
        params.validate()?;
        Ok(params)
    }

    /// Background-only process with no excitation.
    pub fn poisson(mu: Vec<f64>, beta: f64) -> Result<Self, HawkesError> {
        let n = mu.len();
        Self::new(mu, vec![vec![0.0; n]; n], beta)
    }

    pub fn node_count(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<(), HawkesError> {
        let n = self.mu.len();
        if n == 0 {
            return Err(HawkesError::Params("no nodes".into()));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(HawkesError::Params(format!("beta must be positive, got {}", self.beta)));
        }
        if let Some(m) = self.mu.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(HawkesError::Params(format!("background rate {m} is not a nonnegative number")));
        }
        if self.alpha.len() != n || self.alpha.iter().any(|row| row.len() != n) {
            return Err(HawkesError::Params(format!("alpha must be {n}x{n}")));
        }
        if self.edge_mask.len() != n || self.edge_mask.iter().any(|row| row.len() != n) {
            return Err(HawkesError::Params(format!("edge mask must be {n}x{n}")));
        }
        for j in 0..n {
            for i in 0..n {
                let a = self.alpha[j][i];
                if !(a.is_finite() && a >= 0.0) {
                    return Err(HawkesError::Params(format!("alpha[{j}][{i}] = {a} is not a nonnegative number")));
                }
                if !self.edge_mask[j][i] && a != 0.0 {
                    return Err(HawkesError::Params(format!("alpha[{j}][{i}] = {a} on a masked edge")));
                }
            }
        }
        Ok(())
    }

    /// Number of free parameters: every background rate, every allowed
    /// excitation entry, and the decay.
    pub fn param_count(&self) -> usize {
        let allowed = self.edge_mask.iter().flatten().filter(|&&b| b).count();
        self.mu.len() + allowed + 1
    }

    /// Integrated excitation `G[j][i] = alpha[j][i] / beta` on allowed edges.
    pub fn excitation_matrix(&self) -> Vec<Vec<f64>> {
        self.alpha
            .iter()
            .zip(&self.edge_mask)
            .map(|(row, mask)| {
                row.iter()
                    .zip(mask)
                    .map(|(&a, &allowed)| if allowed { a / self.beta } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_signs() {
        assert!(HawkesParams::new(vec![0.1], vec![vec![0.0]], 0.0).is_err());
        assert!(HawkesParams::new(vec![-0.1], vec![vec![0.0]], 1.0).is_err());
        assert!(HawkesParams::new(vec![0.1], vec![vec![-0.2]], 1.0).is_err());
        assert!(HawkesParams::new(vec![0.1, 0.2], vec![vec![0.0]], 1.0).is_err());
        assert!(HawkesParams::with_mask(vec![0.1], vec![vec![0.2]], 1.0, vec![vec![false]]).is_err());
    }

    #[test]
    fn excitation_matrix_cases() {
        let p = HawkesParams::poisson(vec![0.1, 0.2], 0.5).unwrap();
        assert_eq!(p.excitation_matrix(), vec![vec![0.0; 2]; 2]);

        let beta = 0.7;
        let p = HawkesParams::new(vec![0.1, 0.2], vec![vec![beta, 0.0], vec![0.0, beta]], beta).unwrap();
        assert_eq!(p.excitation_matrix(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

        let p = HawkesParams::new(vec![0.1], vec![vec![0.2]], 0.0833).unwrap();
        assert!((p.excitation_matrix()[0][0] - 2.401).abs() < 1e-3);
    }

    #[test]
    fn param_count_counts_allowed_edges() {
        let p = HawkesParams::poisson(vec![0.1; 5], 0.1).unwrap();
        assert_eq!(p.param_count(), 31);
        let mask = vec![vec![true, false], vec![true, true]];
        let p = HawkesParams::with_mask(vec![0.1, 0.1], vec![vec![0.0; 2]; 2], 1.0, mask).unwrap();
        assert_eq!(p.param_count(), 6);
    }
}
