use std::fmt;

use serde::{Deserialize, Serialize};

/// One-based node identifier, as it appears in taxonomy and event files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct NodeId(u32);

impl TryFrom<u32> for NodeId {
    type Error = String;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Self::new(value).ok_or_else(|| "node ids start at 1".to_string())
    }
}

impl From<NodeId> for u32 {
    fn from(id: NodeId) -> Self {
        id.0
    }
}

impl NodeId {
    /// Returns `None` for zero, which is not a valid id.
    pub fn new(id: u32) -> Option<Self> {
        (id >= 1).then_some(Self(id))
    }

    pub fn from_index(index: usize) -> Self {
        Self(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position in parameter vectors.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn in_range(self, node_count: usize) -> bool {
        self.index() < node_count
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Node-time projection of an event: the only information the sampler sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub tau: f64,
    pub node: NodeId,
}

impl Arrival {
    pub fn new(tau: f64, node: NodeId) -> Self {
        Self { tau, node }
    }
}
