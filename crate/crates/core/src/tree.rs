//! Rooted ordered trees with weighted incoming edges.
//!
//! A [`TreeNode`] carries the weight of the edge leading to it; the root's
//! weight is fixed at 1. Labels are kept for debugging and output only and
//! never take part in structural comparisons, except as the very last
//! tie-break that keeps orderings total.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::weights::{self, WeightConfig};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreeNode {
    pub label: Option<String>,
    pub weight: u64,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(weight: u64) -> Self {
        Self {
            label: None,
            weight,
            children: Vec::new(),
        }
    }

    pub fn labeled(label: impl Into<String>, weight: u64) -> Self {
        Self {
            label: Some(label.into()),
            weight,
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<TreeNode>) -> Self {
        self.children = children;
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(TreeNode::node_count)
            .sum::<usize>()
    }

    /// Depth in edges of the deepest descendant.
    pub fn height(&self) -> usize {
        self.children
            .iter()
            .map(|c| c.height() + 1)
            .max()
            .unwrap_or(0)
    }

    /// Canonical serialization: the node's weight followed by its children in
    /// parentheses, e.g. `1(2(2,1),2)`. Labels are not part of it.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        self.write_canonical(&mut out);
        out
    }

    fn write_canonical(&self, out: &mut String) {
        let _ = write!(out, "{}", self.weight);
        if !self.children.is_empty() {
            out.push('(');
            for (i, child) in self.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                child.write_canonical(out);
            }
            out.push(')');
        }
    }

    /// Pre-order visit of every node together with its depth.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode, usize)) {
        fn go<'a>(node: &'a TreeNode, depth: usize, f: &mut impl FnMut(&'a TreeNode, usize)) {
            f(node, depth);
            for child in &node.children {
                go(child, depth + 1, f);
            }
        }
        go(self, 0, f);
    }
}

/// Read-only view of a tree node, shared by [`TreeNode`] and the merge
/// engine's internal nodes so both order siblings identically.
pub(crate) trait NodeView {
    fn edge_weight(&self) -> u64;
    fn node_label(&self) -> Option<&str>;
    fn child_nodes(&self) -> impl ExactSizeIterator<Item = &Self>;
}

impl NodeView for TreeNode {
    fn edge_weight(&self) -> u64 {
        self.weight
    }
    fn node_label(&self) -> Option<&str> {
        self.label.as_deref()
    }
    fn child_nodes(&self) -> impl ExactSizeIterator<Item = &Self> {
        self.children.iter()
    }
}

/// Compares two nodes by their canonical serialization.
///
/// The order is the lexicographic order of the serialization's token stream,
/// with weights compared numerically and a closing bracket sorting before any
/// further sibling, so a proper prefix comes first.
pub fn cmp_structure(a: &TreeNode, b: &TreeNode) -> Ordering {
    cmp_structure_view(a, b)
}

pub(crate) fn cmp_structure_view<N: NodeView>(a: &N, b: &N) -> Ordering {
    a.edge_weight().cmp(&b.edge_weight()).then_with(|| {
        let (xs, ys) = (a.child_nodes(), b.child_nodes());
        let (lx, ly) = (xs.len(), ys.len());
        for (x, y) in xs.zip(ys) {
            let ord = cmp_structure_view(x, y);
            if ord != Ordering::Equal {
                return ord;
            }
        }
        lx.cmp(&ly)
    })
}

/// Pre-order label comparison, used only once structures are equal.
pub(crate) fn cmp_labels_view<N: NodeView>(a: &N, b: &N) -> Ordering {
    a.node_label().cmp(&b.node_label()).then_with(|| {
        let (xs, ys) = (a.child_nodes(), b.child_nodes());
        let (lx, ly) = (xs.len(), ys.len());
        for (x, y) in xs.zip(ys) {
            let ord = cmp_labels_view(x, y);
            if ord != Ordering::Equal {
                return ord;
            }
        }
        lx.cmp(&ly)
    })
}

/// Total order used everywhere a tie must be broken deterministically:
/// canonical serialization first, labels last.
pub(crate) fn cmp_canonical_view<N: NodeView>(a: &N, b: &N) -> Ordering {
    cmp_structure_view(a, b).then_with(|| cmp_labels_view(a, b))
}

/// A possibly empty rooted tree. Session trees and combined trees share
/// this representation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Tree {
    pub root: Option<TreeNode>,
}

pub type SessionTree = Tree;
pub type CombinedTree = Tree;

impl Tree {
    pub fn empty() -> Self {
        Self { root: None }
    }

    pub fn new(root: TreeNode) -> Self {
        Self { root: Some(root) }
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn node_count(&self) -> usize {
        self.root.as_ref().map_or(0, TreeNode::node_count)
    }

    /// Sum of the weights of all edges (the root carries no edge).
    pub fn total_edge_weight(&self) -> u64 {
        let Some(root) = &self.root else { return 0 };
        let mut sum = 0;
        root.walk(&mut |n, depth| {
            if depth > 0 {
                sum += n.weight;
            }
        });
        sum
    }

    /// Largest edge weight, or 1 for a single-node tree (the root's fixed weight).
    pub fn max_edge_weight(&self) -> u64 {
        let Some(root) = &self.root else { return 0 };
        let mut max = 1;
        root.walk(&mut |n, depth| {
            if depth > 0 {
                max = max.max(n.weight);
            }
        });
        max
    }

    pub fn canonical_string(&self) -> String {
        self.root
            .as_ref()
            .map_or_else(String::new, TreeNode::canonical_string)
    }

    /// Returns the first edge (as a child-index path) whose weight exceeds the
    /// weight of its parent edge, if any.
    pub fn monotonicity_violation(&self) -> Option<Vec<usize>> {
        fn go(node: &TreeNode, parent_weight: Option<u64>, path: &mut Vec<usize>) -> bool {
            if let Some(pw) = parent_weight {
                if node.weight > pw {
                    return true;
                }
            }
            // The root's fixed weight says nothing about its child edges.
            let limit = if path.is_empty() && parent_weight.is_none() {
                None
            } else {
                Some(node.weight)
            };
            for (i, child) in node.children.iter().enumerate() {
                path.push(i);
                if go(child, limit, path) {
                    return true;
                }
                path.pop();
            }
            false
        }
        let root = self.root.as_ref()?;
        let mut path = Vec::new();
        go(root, None, &mut path).then_some(path)
    }
}

impl From<TreeNode> for Tree {
    fn from(root: TreeNode) -> Self {
        Tree::new(root)
    }
}

/// Sibling order: larger subtrees first, then heavier subtrees (stabilized
/// weight, base 2, quantized), then the canonical serialization, then labels.
pub(crate) fn cmp_siblings<N: NodeView>(a: (usize, i64, &N), b: (usize, i64, &N)) -> Ordering {
    b.0.cmp(&a.0)
        .then_with(|| b.1.cmp(&a.1))
        .then_with(|| cmp_canonical_view(a.2, b.2))
}

/// Orders every node's children canonically. Idempotent.
pub fn canonical_sort(tree: &Tree) -> Tree {
    Tree {
        root: tree.root.as_ref().map(canonical_sort_node),
    }
}

pub fn canonical_sort_node(node: &TreeNode) -> TreeNode {
    sort_rec(node).2
}

/// Returns (size, canonical weight, sorted node).
fn sort_rec(node: &TreeNode) -> (usize, f64, TreeNode) {
    let canon = WeightConfig::canonical();
    let mut keyed: Vec<(usize, f64, i64, TreeNode)> = node
        .children
        .iter()
        .map(|c| {
            let (size, w, t) = sort_rec(c);
            (size, w, weights::quantize(w), t)
        })
        .collect();
    keyed.sort_by(|a, b| cmp_siblings((a.0, a.2, &a.3), (b.0, b.2, &b.3)));

    let size = 1 + keyed.iter().map(|k| k.0).sum::<usize>();
    let weight = if keyed.is_empty() {
        canon.leaf_weight(node.weight)
    } else {
        canon.internal_weight(keyed.iter().map(|k| k.3.weight as f64 * k.1).sum())
    };
    let sorted = TreeNode {
        label: node.label.clone(),
        weight: node.weight,
        children: keyed.into_iter().map(|k| k.3).collect(),
    };
    (size, weight, sorted)
}
