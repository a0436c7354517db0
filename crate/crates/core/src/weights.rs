//! Recursive log-weighted subtree mass.
//!
//! For a leaf `p` the weight is `log_b(2 * w(p))`. For an internal node the
//! literal form is `log_b(sum over children q of w(q) * W(q))`; the stabilized
//! form applies the leaf's factor 2 to the internal case as well,
//! `log_b(2 * sum ...)`, which keeps every weight at or above 1 for base 2 and
//! integer edge weights. The literal form degenerates on unit chains (the
//! middle node of `root -> a -> leaf` gets weight 0, so the root's argument
//! is 0), which is reported as [`WeightError::NonPositiveLogArgument`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{Tree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    Literal,
    #[default]
    Stabilized,
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Literal => "literal",
            WeightMode::Stabilized => "stabilized",
        })
    }
}

impl std::str::FromStr for WeightMode {
    type Err = WeightError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(WeightMode::Literal),
            "stabilized" => Ok(WeightMode::Stabilized),
            other => Err(WeightError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub mode: WeightMode,
    pub log_base: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            mode: WeightMode::Stabilized,
            log_base: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("logarithm argument {argument} is not positive at node path {path:?}")]
    NonPositiveLogArgument { path: Vec<usize>, argument: f64 },
    #[error("log base must be a finite number greater than 1, got {0}")]
    InvalidLogBase(f64),
    #[error("unknown weight mode {0:?} (expected literal or stabilized)")]
    UnknownMode(String),
}

impl WeightConfig {
    pub fn new(mode: WeightMode, log_base: f64) -> Result<Self, WeightError> {
        if !(log_base.is_finite() && log_base > 1.0) {
            return Err(WeightError::InvalidLogBase(log_base));
        }
        Ok(Self { mode, log_base })
    }

    /// Stabilized, base 2: the weighting that defines canonical sibling order.
    pub fn canonical() -> Self {
        Self::default()
    }

    fn log(&self, x: f64) -> f64 {
        if self.log_base == 2.0 {
            x.log2()
        } else if self.log_base == 10.0 {
            x.log10()
        } else {
            x.ln() / self.log_base.ln()
        }
    }

    pub(crate) fn leaf_weight(&self, edge_weight: u64) -> f64 {
        self.log(2.0 * edge_weight as f64)
    }

    /// Weight of an internal node from `sum of w(q) * W(q)` over its children.
    /// Non-positive literal arguments map to negative infinity.
    pub(crate) fn internal_weight(&self, child_sum: f64) -> f64 {
        let arg = self.internal_argument(child_sum);
        if arg > 0.0 {
            self.log(arg)
        } else {
            f64::NEG_INFINITY
        }
    }

    fn internal_argument(&self, child_sum: f64) -> f64 {
        match self.mode {
            WeightMode::Literal => child_sum,
            WeightMode::Stabilized => 2.0 * child_sum,
        }
    }
}

/// Subtree weight of `node`, treating its own incoming edge weight as `w(p)`.
/// Callers evaluating a root pass a node whose weight is 1.
pub fn subtree_weight(node: &TreeNode, config: &WeightConfig) -> Result<f64, WeightError> {
    let mut path = Vec::new();
    weight_rec(node, config, &mut path)
}

fn weight_rec(
    node: &TreeNode,
    config: &WeightConfig,
    path: &mut Vec<usize>,
) -> Result<f64, WeightError> {
    if node.children.is_empty() {
        return Ok(config.leaf_weight(node.weight));
    }
    let mut sum = 0.0;
    for (i, child) in node.children.iter().enumerate() {
        path.push(i);
        sum += child.weight as f64 * weight_rec(child, config, path)?;
        path.pop();
    }
    let argument = config.internal_argument(sum);
    if argument > 0.0 {
        Ok(config.log(argument))
    } else {
        Err(WeightError::NonPositiveLogArgument {
            path: path.clone(),
            argument,
        })
    }
}

/// Root subtree weight of a tree; 0 for the empty tree.
pub fn tree_weight(tree: &Tree, config: &WeightConfig) -> Result<f64, WeightError> {
    match &tree.root {
        None => Ok(0.0),
        Some(root) => subtree_weight(root, config),
    }
}

/// Like [`subtree_weight`], but a degenerate literal argument yields negative
/// infinity instead of an error, so weights stay comparable.
pub fn extended_subtree_weight(node: &TreeNode, config: &WeightConfig) -> f64 {
    if node.children.is_empty() {
        return config.leaf_weight(node.weight);
    }
    let sum = node
        .children
        .iter()
        .map(|c| c.weight as f64 * extended_subtree_weight(c, config))
        .sum();
    config.internal_weight(sum)
}

pub fn extended_tree_weight(tree: &Tree, config: &WeightConfig) -> f64 {
    tree.root
        .as_ref()
        .map_or(0.0, |r| extended_subtree_weight(r, config))
}

const QUANTUM: f64 = 1e9;

/// Maps a weight onto a fixed grid of 1e-9 so that orderings built on it are
/// total and insensitive to summation-order rounding.
pub fn quantize(weight: f64) -> i64 {
    if weight.is_finite() {
        (weight * QUANTUM).round() as i64
    } else if weight > 0.0 {
        i64::MAX
    } else {
        i64::MIN
    }
}
