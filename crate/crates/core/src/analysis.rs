//! Threshold subtrees, node-count curves and structural metrics of combined
//! trees.

use serde::Serialize;
use thiserror::Error;

use crate::tree::{canonical_sort_node, Tree, TreeNode};
use crate::weights::{self, WeightConfig, WeightMode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("tree is empty")]
    EmptyTree,
    #[error("session fraction must lie in (0, 1], got {0}")]
    InvalidFraction(String),
}

/// Drops every edge lighter than `threshold` together with the subtree below
/// it. The root always survives; the result is canonically ordered.
pub fn prune_threshold(tree: &Tree, threshold: u64) -> Tree {
    fn prune(node: &TreeNode, threshold: u64) -> TreeNode {
        TreeNode {
            label: node.label.clone(),
            weight: node.weight,
            children: node
                .children
                .iter()
                .filter(|c| c.weight >= threshold)
                .map(|c| prune(c, threshold))
                .collect(),
        }
    }
    Tree {
        root: tree
            .root
            .as_ref()
            .map(|r| canonical_sort_node(&prune(r, threshold))),
    }
}

/// Threshold that keeps edges shared by at least `fraction` of `sessions`
/// sessions: `ceil(fraction * sessions)`, at least 1.
pub fn threshold_for_fraction(fraction: f64, sessions: usize) -> Result<u64, AnalysisError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AnalysisError::InvalidFraction(fraction.to_string()));
    }
    // Guard against 0.5 * 32 landing a hair above 16 after rounding.
    let raw = fraction * sessions as f64;
    let t = (raw - 1e-9).ceil().max(1.0);
    Ok(t as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThresholdCurve {
    /// `(threshold, nodes_remaining)` for thresholds `1..=max_weight + 1`.
    pub points: Vec<(u64, usize)>,
}

impl ThresholdCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,nodes\n");
        for (t, n) in &self.points {
            out.push_str(&format!("{t},{n}\n"));
        }
        out
    }
}

pub fn threshold_curve(tree: &Tree) -> ThresholdCurve {
    let Some(root) = &tree.root else {
        return ThresholdCurve { points: Vec::new() };
    };
    // A node survives threshold t iff every edge on its root path is >= t,
    // i.e. t <= min weight along the path. Count nodes per path minimum.
    let max = tree.max_edge_weight();
    let mut survivors_at = vec![0usize; max as usize + 2];
    fn visit(node: &TreeNode, path_min: u64, counts: &mut [usize]) {
        counts[path_min as usize] += 1;
        for child in &node.children {
            visit(child, path_min.min(child.weight), counts);
        }
    }
    // The root survives every threshold up to max + 1.
    survivors_at[max as usize + 1] += 1;
    for child in &root.children {
        visit(child, child.weight, &mut survivors_at);
    }
    let mut points = Vec::with_capacity(max as usize + 1);
    let mut remaining: usize = survivors_at[1..].iter().sum();
    for t in 1..=max + 1 {
        points.push((t, remaining));
        remaining -= survivors_at[t as usize];
    }
    ThresholdCurve { points }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeMetrics {
    pub node_count: usize,
    pub root_degree: usize,
    /// Largest root distance, in edges.
    pub depth: usize,
    /// Longest undirected path, in edges.
    pub diameter: usize,
    pub per_level_breadth: Vec<usize>,
    pub leaf_count: usize,
    /// Root subtree weight; `None` when the literal weighting degenerates.
    pub subtree_weight: Option<f64>,
    pub weight_mode: WeightMode,
    pub log_base: f64,
}

pub fn tree_metrics(tree: &Tree, config: &WeightConfig) -> Result<TreeMetrics, AnalysisError> {
    let root = tree.root.as_ref().ok_or(AnalysisError::EmptyTree)?;

    let mut per_level_breadth = Vec::new();
    let mut leaf_count = 0;
    root.walk(&mut |node, depth| {
        if per_level_breadth.len() <= depth {
            per_level_breadth.push(0);
        }
        per_level_breadth[depth] += 1;
        if node.is_leaf() {
            leaf_count += 1;
        }
    });

    Ok(TreeMetrics {
        node_count: per_level_breadth.iter().sum(),
        root_degree: root.children.len(),
        depth: per_level_breadth.len() - 1,
        diameter: diameter(root),
        per_level_breadth,
        leaf_count,
        subtree_weight: weights::subtree_weight(root, config).ok(),
        weight_mode: config.mode,
        log_base: config.log_base,
    })
}

/// Longest path in edges: the best sum of the two tallest child branches at
/// any node.
fn diameter(root: &TreeNode) -> usize {
    fn go(node: &TreeNode, best: &mut usize) -> usize {
        let (mut first, mut second) = (0, 0);
        for child in &node.children {
            let h = go(child, best) + 1;
            if h > first {
                second = first;
                first = h;
            } else if h > second {
                second = h;
            }
        }
        *best = (*best).max(first + second);
        first
    }
    let mut best = 0;
    go(root, &mut best);
    best
}
