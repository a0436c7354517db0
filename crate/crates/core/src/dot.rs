//! Graphviz export. Edge thickness encodes edge weight.

use std::fmt::Write as _;

use thiserror::Error;

use crate::tree::{Tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotOptions {
    pub min_penwidth: f64,
    pub max_penwidth: f64,
    pub show_labels: bool,
}

impl Default for DotOptions {
    fn default() -> Self {
        Self {
            min_penwidth: 1.0,
            max_penwidth: 8.0,
            show_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DotError {
    #[error("cannot export an empty tree")]
    EmptyTree,
    #[error("pen widths must satisfy 0 < min <= max, got min = {min}, max = {max}")]
    InvalidPenwidth { min: f64, max: f64 },
}

impl DotOptions {
    pub fn validate(&self) -> Result<(), DotError> {
        let (min, max) = (self.min_penwidth, self.max_penwidth);
        if min > 0.0 && min <= max && max.is_finite() {
            Ok(())
        } else {
            Err(DotError::InvalidPenwidth { min, max })
        }
    }

    /// Linear map of `weight` in `1..=max_weight` onto the pen-width range.
    pub fn penwidth(&self, weight: u64, max_weight: u64) -> f64 {
        if max_weight <= 1 {
            return self.min_penwidth;
        }
        let span = self.max_penwidth - self.min_penwidth;
        self.min_penwidth + span * (weight as f64 - 1.0) / (max_weight as f64 - 1.0)
    }
}

/// Writes a `digraph`; nodes are numbered in pre-order, so output is stable
/// for a given (canonically ordered) tree.
pub fn export_dot(tree: &Tree, options: &DotOptions) -> Result<String, DotError> {
    options.validate()?;
    let root = tree.root.as_ref().ok_or(DotError::EmptyTree)?;
    let max_weight = tree.max_edge_weight();

    let mut out = String::from("digraph session_tree {\n");
    out.push_str("  node [shape=circle, width=0.25];\n");

    let mut next_id = 0usize;
    let mut edges = String::new();
    fn visit(
        node: &TreeNode,
        parent: Option<usize>,
        next_id: &mut usize,
        nodes: &mut String,
        edges: &mut String,
        options: &DotOptions,
        max_weight: u64,
    ) {
        let id = *next_id;
        *next_id += 1;
        match (&node.label, options.show_labels) {
            (Some(label), true) => {
                let _ = writeln!(nodes, "  n{id} [label=\"{}\"];", escape(label));
            }
            _ => {
                let _ = writeln!(nodes, "  n{id} [label=\"\"];");
            }
        }
        if let Some(p) = parent {
            let _ = write!(
                edges,
                "  n{p} -> n{id} [penwidth={}, weight={}",
                options.penwidth(node.weight, max_weight),
                node.weight
            );
            if options.show_labels {
                let _ = write!(edges, ", label=\"{}\"", node.weight);
            }
            edges.push_str("];\n");
        }
        for child in &node.children {
            visit(child, Some(id), next_id, nodes, edges, options, max_weight);
        }
    }
    visit(
        root,
        None,
        &mut next_id,
        &mut out,
        &mut edges,
        options,
        max_weight,
    );
    out.push_str(&edges);
    out.push_str("}\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
