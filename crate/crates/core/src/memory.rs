//! Prompt-memory policies: which earlier events, and with which weights,
//! condition the next generation step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::event_stream::Event;
use crate::hawkes::HawkesParams;
use crate::node::NodeId;

pub const DEFAULT_EPS_RAW: f64 = 1e-5;
pub const DEFAULT_EPS_NORM: f64 = 0.03;
const ZERO_SCORE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryItem {
    pub node: NodeId,
    /// Index into the run history (0 is the seed).
    pub rep_index: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    pub items: Vec<MemoryItem>,
    pub step_tau: f64,
    pub step_node: NodeId,
}

impl Memory {
    pub fn empty(step_tau: f64, step_node: NodeId) -> Self {
        Self { items: Vec::new(), step_tau, step_node }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn uniform(indices: &[usize], history: &[Event], step_tau: f64, step_node: NodeId) -> Self {
        let weight = 1.0 / indices.len() as f64;
        Self {
            items: indices
                .iter()
                .map(|&m| MemoryItem { node: history[m].node, rep_index: m, weight })
                .collect(),
            step_tau,
            step_node,
        }
    }
}

/// Per-node Hawkes bookkeeping for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryCandidate {
    pub node: NodeId,
    /// Latest prior event of this node.
    pub rep_index: usize,
    /// `sum exp(-beta (tau_t - tau_m))` over the node's prior events.
    pub decayed_state: f64,
    /// `alpha[node][target] * decayed_state`
    pub raw_score: f64,
    /// `raw_score / sum of raw scores`, zero when every score is zero.
    pub normalized_share: f64,
}

/// Eligible nodes for a step: an allowed edge into `node_t` and at least one
/// event strictly before `tau_t`. Returned in node order.
pub fn hawkes_candidates(params: &HawkesParams, history: &[Event], tau_t: f64, node_t: NodeId) -> Vec<MemoryCandidate> {
    let n = params.node_count();
    let target = node_t.index();
    let mut latest: Vec<Option<usize>> = vec![None; n];
    let mut state = vec![0.0; n];
    for (m, e) in history.iter().enumerate() {
        let j = e.node.index();
        if e.tau < tau_t && j < n {
            latest[j] = Some(m);
            state[j] += (-params.beta * (tau_t - e.tau)).exp();
        }
    }
    let mut candidates: Vec<MemoryCandidate> = (0..n)
        .filter(|&j| target < n && params.edge_mask[j][target])
        .filter_map(|j| {
            latest[j].map(|rep_index| MemoryCandidate {
                node: NodeId::from_index(j),
                rep_index,
                decayed_state: state[j],
                raw_score: params.alpha[j][target] * state[j],
                normalized_share: 0.0,
            })
        })
        .collect();
    let total: f64 = candidates.iter().map(|c| c.raw_score).sum();
    if total > ZERO_SCORE {
        for c in &mut candidates {
            c.normalized_share = c.raw_score / total;
        }
    }
    candidates
}

/// Hawkes memory: score eligible nodes by decayed excitation toward the
/// current node, drop those under either threshold, keep the top `k` by
/// raw score (ties broken by lower node id), and normalize the kept scores.
pub fn hawkes_memory(
    params: &HawkesParams,
    history: &[Event],
    tau_t: f64,
    node_t: NodeId,
    k: usize,
    eps_raw: f64,
    eps_norm: f64,
) -> Memory {
    let candidates = hawkes_candidates(params, history, tau_t, node_t);
    let total: f64 = candidates.iter().map(|c| c.raw_score).sum();
    if total <= ZERO_SCORE {
        return Memory::empty(tau_t, node_t);
    }
    let mut kept: Vec<&MemoryCandidate> = candidates
        .iter()
        .filter(|c| c.raw_score >= eps_raw && c.normalized_share >= eps_norm && c.raw_score > 0.0)
        .collect();
    kept.sort_by(|a, b| b.raw_score.total_cmp(&a.raw_score).then(a.node.cmp(&b.node)));
    kept.truncate(k);
    let kept_total: f64 = kept.iter().map(|c| c.raw_score).sum();
    Memory {
        items: kept
            .iter()
            .map(|c| MemoryItem { node: c.node, rep_index: c.rep_index, weight: c.raw_score / kept_total })
            .collect(),
        step_tau: tau_t,
        step_node: node_t,
    }
}

fn prior_count(history: &[Event], tau_t: f64) -> usize {
    history.iter().take_while(|e| e.tau < tau_t).count()
}

/// The `k` most recent prior events, newest first, uniform weights.
pub fn last_k_memory(history: &[Event], tau_t: f64, node_t: NodeId, k: usize) -> Memory {
    let available = prior_count(history, tau_t);
    let take = k.min(available);
    let indices: Vec<usize> = (available - take..available).rev().collect();
    if indices.is_empty() {
        return Memory::empty(tau_t, node_t);
    }
    Memory::uniform(&indices, history, tau_t, node_t)
}

/// `k` prior events drawn uniformly without replacement, listed newest
/// first, uniform weights.
pub fn random_k_memory<R: Rng + ?Sized>(history: &[Event], tau_t: f64, node_t: NodeId, k: usize, rng: &mut R) -> Memory {
    let available = prior_count(history, tau_t);
    let take = k.min(available);
    if take == 0 {
        return Memory::empty(tau_t, node_t);
    }
    let mut indices = rand::seq::index::sample(rng, available, take).into_vec();
    indices.sort_unstable_by(|a, b| b.cmp(a));
    Memory::uniform(&indices, history, tau_t, node_t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Hawkes,
    LastK,
    RandomK,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Hawkes, PolicyKind::LastK, PolicyKind::RandomK];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Hawkes => "hawkes",
            PolicyKind::LastK => "last_k",
            PolicyKind::RandomK => "random_k",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hawkes" => Ok(Self::Hawkes),
            "last_k" | "last-k" | "chronological" => Ok(Self::LastK),
            "random_k" | "random-k" | "random" => Ok(Self::RandomK),
            other => Err(format!("unknown policy `{other}` (expected hawkes, last_k or random_k)")),
        }
    }
}

/// A memory policy as used by the cascade loop.
pub trait MemoryPolicy {
    fn kind(&self) -> PolicyKind;
    fn select(&mut self, history: &[Event], tau_t: f64, node_t: NodeId) -> Memory;
}

pub struct HawkesPolicy {
    pub params: HawkesParams,
    pub k: usize,
    pub eps_raw: f64,
    pub eps_norm: f64,
}

impl MemoryPolicy for HawkesPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Hawkes
    }

    fn select(&mut self, history: &[Event], tau_t: f64, node_t: NodeId) -> Memory {
        hawkes_memory(&self.params, history, tau_t, node_t, self.k, self.eps_raw, self.eps_norm)
    }
}

pub struct LastKPolicy {
    pub k: usize,
}

impl MemoryPolicy for LastKPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::LastK
    }

    fn select(&mut self, history: &[Event], tau_t: f64, node_t: NodeId) -> Memory {
        last_k_memory(history, tau_t, node_t, self.k)
    }
}

pub struct RandomKPolicy<R> {
    pub k: usize,
    pub rng: R,
}

impl<R: Rng> MemoryPolicy for RandomKPolicy<R> {
    fn kind(&self) -> PolicyKind {
        PolicyKind::RandomK
    }

    fn select(&mut self, history: &[Event], tau_t: f64, node_t: NodeId) -> Memory {
        random_k_memory(history, tau_t, node_t, self.k, &mut self.rng)
    }
}
