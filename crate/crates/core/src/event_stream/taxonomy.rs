use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::node::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub label: String,
    /// Style instruction given to the generator when this node writes.
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRule {
    /// Matches the domain itself and any subdomain of it.
    pub pattern: String,
    pub node: NodeId,
}

/// Hand-curated outlet categories. Domains are mapped by the first matching
/// rule; anything unmatched goes to `fallback_node`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTaxonomy {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub domain_map: Vec<DomainRule>,
    pub fallback_node: Option<NodeId>,
}

impl NodeTaxonomy {
    pub fn new(
        nodes: Vec<NodeSpec>,
        domain_map: Vec<DomainRule>,
        fallback_node: Option<NodeId>,
    ) -> Result<Self, IngestError> {
        let taxonomy = Self {
            nodes,
            domain_map,
            fallback_node,
        };
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let taxonomy: Self =
            serde_json::from_str(text).map_err(|e| IngestError::Taxonomy(e.to_string()))?;
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |msg: String| Err(IngestError::Taxonomy(msg));
        if self.nodes.is_empty() {
            return bad("taxonomy has no nodes".into());
        }
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.id.index() != pos {
                return bad(format!(
                    "node ids must be contiguous from 1; position {} has id {}",
                    pos + 1,
                    node.id
                ));
            }
            if node.instruction.trim().is_empty() {
                return bad(format!("node {} has an empty instruction", node.id));
            }
            if node.label.trim().is_empty() {
                return bad(format!("node {} has an empty label", node.id));
            }
        }
        for rule in &self.domain_map {
            if !rule.node.in_range(self.nodes.len()) {
                return bad(format!("pattern `{}` maps to unknown node {}", rule.pattern, rule.node));
            }
        }
        if let Some(fallback) = self.fallback_node {
            if !fallback.in_range(self.nodes.len()) {
                return bad(format!("fallback node {fallback} does not exist"));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.get(id.index())
    }

    pub fn label(&self, id: NodeId) -> &str {
        self.node(id).map(|n| n.label.as_str()).unwrap_or("unknown")
    }

    pub fn assign(&self, domain: &str) -> Result<NodeId, IngestError> {
        let domain = domain.trim().trim_end_matches('.').to_ascii_lowercase();
        self.domain_map
            .iter()
            .find(|rule| domain_matches(&domain, &rule.pattern))
            .map(|rule| rule.node)
            .or(self.fallback_node)
            .ok_or_else(|| IngestError::Taxonomy(format!("domain `{domain}` matches no rule and there is no fallback node")))
    }
}

fn domain_matches(domain: &str, pattern: &str) -> bool {
    let pattern = pattern.trim().trim_start_matches("*.").to_ascii_lowercase();
    if pattern.is_empty() {
        return false;
    }
    domain == pattern
        || domain
            .strip_suffix(pattern.as_str())
            .is_some_and(|head| head.ends_with('.'))
}
