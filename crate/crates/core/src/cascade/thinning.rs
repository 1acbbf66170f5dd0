use rand::Rng;

use super::CascadeError;
use crate::hawkes::{intensity_from_state, HawkesParams};
use crate::node::{Arrival, NodeId};

/// Total intensity below which a process without background rate is
/// considered extinct.
pub const EXTINCTION_RATE: f64 = 1e-12;

/// Ogata thinning over a node-time projection.
///
/// The sampler keeps the decayed state `S_j` at its current time and only
/// ever multiplies it by `exp(-beta * dt) <= 1` between events, so the total
/// intensity evaluated at a proposal can never exceed the bound taken at the
/// left edge of the proposal interval.
#[derive(Debug, Clone)]
pub struct ThinningSampler<'a> {
    params: &'a HawkesParams,
    state: Vec<f64>,
    now: f64,
    background: f64,
    rejections: u64,
}

impl<'a> ThinningSampler<'a> {
    /// State at `start+`: events at exactly `start` are already counted.
    pub fn new(params: &'a HawkesParams, projection: &[Arrival], start: f64) -> Result<Self, CascadeError> {
        params.validate()?;
        if !start.is_finite() {
            return Err(CascadeError::Precondition(format!("start time {start} is not finite")));
        }
        let mut state = vec![0.0; params.node_count()];
        for a in projection {
            if a.tau > start {
                return Err(CascadeError::Precondition(format!(
                    "projection event at {} lies after the start time {start}",
                    a.tau
                )));
            }
            if !a.node.in_range(params.node_count()) {
                return Err(CascadeError::Precondition(format!("projection node {} is out of range", a.node)));
            }
            state[a.node.index()] += (-params.beta * (start - a.tau)).exp();
        }
        Ok(Self {
            params,
            state,
            now: start,
            background: params.mu.iter().sum(),
            rejections: 0,
        })
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Number of rejected proposals so far.
    pub fn rejections(&self) -> u64 {
        self.rejections
    }

    fn node_intensities(&self) -> Vec<f64> {
        (0..self.params.node_count())
            .map(|i| intensity_from_state(self.params, &self.state, i))
            .collect()
    }

    fn decay_to(&mut self, s: f64) {
        let factor = (-self.params.beta * (s - self.now)).exp();
        self.state.iter_mut().for_each(|v| *v *= factor);
        self.now = s;
    }

    /// Draws the next event and adds it to the state.
    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Arrival, CascadeError> {
        loop {
            let bound: f64 = self.node_intensities().iter().sum();
            if bound <= EXTINCTION_RATE && self.background <= 0.0 {
                return Err(CascadeError::RateExtinct { at: self.now });
            }
            if !(bound > 0.0 && bound.is_finite()) {
                return Err(CascadeError::Precondition(format!("total intensity {bound} at {} is unusable", self.now)));
            }
            let u: f64 = rng.random();
            let wait = -(1.0 - u).ln() / bound;
            let proposal = (self.now + wait).max(self.now.next_up());
            self.decay_to(proposal);

            let lambdas = self.node_intensities();
            let total: f64 = lambdas.iter().sum();
            assert!(total <= bound, "thinning bound violated: {total} > {bound}");

            let accept: f64 = rng.random();
            if accept * bound < total {
                let node = pick_node(&lambdas, total, rng.random());
                self.state[node] += 1.0;
                return Ok(Arrival::new(self.now, NodeId::from_index(node)));
            }
            self.rejections += 1;
        }
    }
}

/// Categorical draw proportional to `lambdas` from a uniform in `[0, 1)`.
fn pick_node(lambdas: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut cumulative = 0.0;
    for (i, &l) in lambdas.iter().enumerate() {
        cumulative += l;
        if l > 0.0 && target < cumulative {
            return i;
        }
    }
    lambdas.iter().rposition(|&l| l > 0.0).unwrap_or(0)
}

/// Next event after `start` given only the node-time projection.
pub fn sample_next_event<R: Rng + ?Sized>(
    params: &HawkesParams,
    projection: &[Arrival],
    start: f64,
    rng: &mut R,
) -> Result<Arrival, CascadeError> {
    ThinningSampler::new(params, projection, start)?.next(rng)
}

/// A full realization on `(0, horizon]` from an empty history. Extinction
/// ends the realization early.
pub fn simulate<R: Rng + ?Sized>(params: &HawkesParams, horizon: f64, rng: &mut R) -> Result<Vec<Arrival>, CascadeError> {
    let mut sampler = ThinningSampler::new(params, &[], 0.0)?;
    let mut out = Vec::new();
    loop {
        match sampler.next(rng) {
            Ok(a) if a.tau <= horizon => out.push(a),
            Ok(_) | Err(CascadeError::RateExtinct { .. }) => return Ok(out),
            Err(e) => return Err(e),
        }
    }
}
