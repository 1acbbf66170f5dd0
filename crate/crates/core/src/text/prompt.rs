use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub const ROLE: &str = "You are simulating one item in a Hawkes-driven cross-node news cascade.";
pub const TASK: &str = "Write exactly one concise English sentence or headline-like update.";
pub const OUTPUT: &str = "Only the generated news item.";
pub const NO_PREDECESSOR: &str = "No predecessor context.";
pub const DEFAULT_SUBJECT: &str = "Artemis II";

fn constraints(subject: &str) -> String {
    format!(
        "Use only the weighted predecessor texts below; do not mention weights, simulations, models, or prompts. \
         Do not copy predecessor wording verbatim. Preserve the core {subject} subject while allowing natural semantic drift."
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMemoryItem {
    pub weight: f64,
    pub node_label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub target_node_label: String,
    pub node_style: String,
    /// Hours elapsed since the seed event.
    pub sim_time_hours: f64,
    /// Highest weight first.
    pub memory_items: Vec<PromptMemoryItem>,
    /// Topic the generated items must stay on.
    pub subject: String,
}

impl PromptSpec {
    /// Orders memory items by descending weight; equal weights keep their
    /// given order.
    pub fn new(
        target_node_label: impl Into<String>,
        node_style: impl Into<String>,
        sim_time_hours: f64,
        mut memory_items: Vec<PromptMemoryItem>,
        subject: impl Into<String>,
    ) -> Self {
        memory_items.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        Self {
            target_node_label: target_node_label.into(),
            node_style: node_style.into(),
            sim_time_hours,
            memory_items,
            subject: subject.into(),
        }
    }
}

/// Renders the fixed prompt layout. Weights and elapsed time are printed
/// with two decimals; an empty memory renders the no-predecessor sentence
/// in place of the numbered context list.
pub fn build_prompt(spec: &PromptSpec) -> String {
    let mut p = String::new();
    // writing into a String cannot fail
    let _ = writeln!(p, "Role: {ROLE}");
    let _ = writeln!(p, "Task: {TASK}");
    let _ = writeln!(p, "Constraints: {}", constraints(&spec.subject));
    let _ = writeln!(p, "Target node: {}", spec.target_node_label);
    let _ = writeln!(p, "Node style: {}", spec.node_style);
    let _ = writeln!(p, "Simulated time since seed: {:.2} hours", spec.sim_time_hours);
    let _ = writeln!(p, "Weighted predecessor context:");
    if spec.memory_items.is_empty() {
        let _ = writeln!(p, "{NO_PREDECESSOR}");
    }
    for (i, item) in spec.memory_items.iter().enumerate() {
        let _ = writeln!(p, "{}. (weight={:.2}, node={}) {}", i + 1, item.weight, item.node_label, item.text);
    }
    let _ = writeln!(p, "Output: {OUTPUT}");
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_spec() -> PromptSpec {
        PromptSpec::new(
            "local_tv",
            "Write like a local TV news web update: clear, public-facing, practical, and locally relatable.",
            15.04,
            vec![
                PromptMemoryItem {
                    weight: 0.19,
                    node_label: "general_news".into(),
                    text: "Crew aboard Artemis II continues to prepare for historic space mission, overcoming initial hurdles as NASA reports smooth progress.".into(),
                },
                PromptMemoryItem {
                    weight: 0.81,
                    node_label: "local_tv".into(),
                    text: "Artemis II crew making great strides in their preparations for the mission, according to latest updates from NASA. Local teams are keeping a close eye on their progress and wish them all the best for this historic journey.".into(),
                },
            ],
            DEFAULT_SUBJECT,
        )
    }

    #[test]
    fn renders_reference_layout() {
        let prompt = build_prompt(&reference_spec());
        let lines: Vec<&str> = prompt.lines().collect();
        assert_eq!(lines[0], "Role: You are simulating one item in a Hawkes-driven cross-node news cascade.");
        assert!(lines[2].starts_with("Constraints: Use only the weighted predecessor texts below;"));
        assert!(lines[2].ends_with("Preserve the core Artemis II subject while allowing natural semantic drift."));
        assert_eq!(lines[3], "Target node: local_tv");
        assert_eq!(lines[5], "Simulated time since seed: 15.04 hours");
        assert_eq!(lines[6], "Weighted predecessor context:");
        assert!(lines[7].starts_with("1. (weight=0.81, node=local_tv) Artemis II crew making great strides"));
        assert!(lines[8].starts_with("2. (weight=0.19, node=general_news) Crew aboard Artemis II"));
        assert_eq!(lines[9], "Output: Only the generated news item.");
        assert_eq!(lines.len(), 10);
    }

    #[test]
    fn deterministic() {
        assert_eq!(build_prompt(&reference_spec()), build_prompt(&reference_spec()));
    }

    #[test]
    fn empty_memory_branch() {
        let spec = PromptSpec::new("general_news", "Write plainly.", 0.4, vec![], DEFAULT_SUBJECT);
        let prompt = build_prompt(&spec);
        assert!(prompt.contains("Weighted predecessor context:\nNo predecessor context.\n"));
        assert!(!prompt.contains("1. (weight="));
        assert!(prompt.contains("Simulated time since seed: 0.40 hours"));
    }

    #[test]
    fn distinct_fields_distinct_prompts() {
        let base = reference_spec();
        let mut other = base.clone();
        other.sim_time_hours = 15.05;
        assert_ne!(build_prompt(&base), build_prompt(&other));
        let mut other = base.clone();
        other.memory_items[1].weight = 0.2;
        assert_ne!(build_prompt(&base), build_prompt(&other));
        let mut other = base.clone();
        other.memory_items.swap(0, 1);
        assert_ne!(build_prompt(&base), build_prompt(&other));
        let mut other = base.clone();
        other.target_node_label = "mass_market".into();
        assert_ne!(build_prompt(&base), build_prompt(&other));
    }
}
