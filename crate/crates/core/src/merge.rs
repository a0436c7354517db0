//! Pairwise optimal merging of weighted trees and the sorted fold over a set.
//!
//! Two nodes are merged by choosing a partial one-to-one matching between
//! their child lists, merging matched children recursively and carrying the
//! unmatched ones over. Among all matchings the result with the fewest nodes
//! wins; among those, the one whose merged node has the largest subtree
//! weight; remaining ties go to the smallest canonical serialization.
//!
//! Node count is additive over matched pairs (`nodes(a) + nodes(b) -
//! savings`), and the parent's weight is a monotone function of
//! `sum w(q) * W(q)` over its children, so both criteria decompose into
//! per-pair terms. Two consequences drive the search:
//!
//! * each matched pair contributes its own optimal merge, so pair results are
//!   memoized;
//! * every pair saves at least one node, so an optimal matching always
//!   saturates the smaller child list and only saturating matchings are
//!   enumerated.
//!
//! The enumeration itself is a depth-first branch and bound over the rows of
//! the smaller list. Structurally identical siblings are interchangeable and
//! are enumerated once.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::rc::Rc;

use thiserror::Error;

use crate::tree::{cmp_canonical_view, cmp_siblings, cmp_structure_view, NodeView, Tree, TreeNode};
use crate::weights::{self, WeightConfig};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeOptions {
    pub weights: WeightConfig,
    /// Maximum number of (partial) matchings evaluated per `merge_pair` call.
    pub budget: u64,
    /// When the budget runs out, pair children by descending subtree size
    /// instead of failing.
    pub greedy_fallback: bool,
}

impl Default for MergeOptions {
    fn default() -> Self {
        Self {
            weights: WeightConfig::default(),
            budget: DEFAULT_BUDGET,
            greedy_fallback: false,
        }
    }
}

impl MergeOptions {
    pub fn with_weights(weights: WeightConfig) -> Self {
        Self {
            weights,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("matching enumeration exceeded the budget of {budget} evaluated matchings")]
    CombinatorialBudgetExceeded { budget: u64 },
}

/// Result of a merge together with search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub tree: Tree,
    pub evaluated_matchings: u64,
    /// Number of node pairs resolved by the greedy fallback.
    pub greedy_pairs: u64,
}

pub fn merge_pair(a: &Tree, b: &Tree, options: &MergeOptions) -> Result<Tree, MergeError> {
    merge_pair_outcome(a, b, options).map(|o| o.tree)
}

pub fn merge_pair_outcome(
    a: &Tree,
    b: &Tree,
    options: &MergeOptions,
) -> Result<MergeOutcome, MergeError> {
    let cfg = options.weights;
    let (a, b) = match (&a.root, &b.root) {
        (None, None) => return Ok(MergeOutcome::trivial(Tree::empty())),
        (Some(r), None) | (None, Some(r)) => {
            let node = Node::from_tree(r, &cfg);
            return Ok(MergeOutcome::trivial(Tree::new(node.to_tree())));
        }
        (Some(a), Some(b)) => (Node::from_tree(a, &cfg), Node::from_tree(b, &cfg)),
    };
    let mut engine = Engine::new(options);
    let merged = engine.merge(&a, &b, 1)?;
    Ok(MergeOutcome {
        tree: Tree::new(merged.to_tree()),
        evaluated_matchings: engine.evaluated,
        greedy_pairs: engine.greedy_pairs,
    })
}

impl MergeOutcome {
    fn trivial(tree: Tree) -> Self {
        Self {
            tree,
            evaluated_matchings: 0,
            greedy_pairs: 0,
        }
    }
}

/// Indices of `trees` in fold order: ascending root subtree weight, ties by
/// canonical serialization and then labels.
pub fn merge_order(trees: &[Tree], config: &WeightConfig) -> Vec<usize> {
    let sorted: Vec<Tree> = trees.iter().map(crate::tree::canonical_sort).collect();
    let keys: Vec<i64> = sorted
        .iter()
        .map(|t| weights::quantize(weights::extended_tree_weight(t, config)))
        .collect();
    let mut order: Vec<usize> = (0..trees.len()).collect();
    order.sort_by(|&i, &j| {
        keys[i]
            .cmp(&keys[j])
            .then_with(|| match (&sorted[i].root, &sorted[j].root) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(x), Some(y)) => cmp_canonical_view(x, y),
            })
    });
    order
}

/// Folds [`merge_pair`] over the trees in [`merge_order`], starting from the
/// empty tree. The result does not depend on the order of `trees`.
pub fn merge_all(trees: &[Tree], options: &MergeOptions) -> Result<Tree, MergeError> {
    merge_all_outcome(trees, options).map(|o| o.tree)
}

pub fn merge_all_outcome(
    trees: &[Tree],
    options: &MergeOptions,
) -> Result<MergeOutcome, MergeError> {
    let mut acc = MergeOutcome::trivial(Tree::empty());
    for i in merge_order(trees, &options.weights) {
        let step = merge_pair_outcome(&acc.tree, &trees[i], options)?;
        acc = MergeOutcome {
            tree: step.tree,
            evaluated_matchings: acc.evaluated_matchings + step.evaluated_matchings,
            greedy_pairs: acc.greedy_pairs + step.greedy_pairs,
        };
    }
    Ok(acc)
}

/// Shared, immutable node with cached size and weights.
#[derive(Debug)]
struct Node {
    label: Option<String>,
    weight: u64,
    children: Vec<Rc<Node>>,
    size: usize,
    /// Quantized stabilized base-2 weight, the canonical sibling key.
    canon_key: i64,
    canon_weight: f64,
    /// Subtree weight under the merge's configuration (extended reals).
    weight_value: f64,
}

impl NodeView for Node {
    fn edge_weight(&self) -> u64 {
        self.weight
    }
    fn node_label(&self) -> Option<&str> {
        self.label.as_deref()
    }
    fn child_nodes(&self) -> impl ExactSizeIterator<Item = &Self> {
        self.children.iter().map(|c| &**c)
    }
}

impl Node {
    fn build(
        label: Option<String>,
        weight: u64,
        mut children: Vec<Rc<Node>>,
        cfg: &WeightConfig,
    ) -> Rc<Node> {
        children
            .sort_by(|x, y| cmp_siblings((x.size, x.canon_key, &**x), (y.size, y.canon_key, &**y)));
        let canon = WeightConfig::canonical();
        let size = 1 + children.iter().map(|c| c.size).sum::<usize>();
        let (canon_weight, weight_value) = if children.is_empty() {
            (canon.leaf_weight(weight), cfg.leaf_weight(weight))
        } else {
            let canon_weight = canon.internal_weight(
                children
                    .iter()
                    .map(|c| c.weight as f64 * c.canon_weight)
                    .sum(),
            );
            let weight_value = if *cfg == canon {
                canon_weight
            } else {
                cfg.internal_weight(children.iter().map(|c| c.contribution()).sum())
            };
            (canon_weight, weight_value)
        };
        Rc::new(Node {
            label,
            weight,
            children,
            size,
            canon_key: weights::quantize(canon_weight),
            canon_weight,
            weight_value,
        })
    }

    fn from_tree(node: &TreeNode, cfg: &WeightConfig) -> Rc<Node> {
        let children = node
            .children
            .iter()
            .map(|c| Node::from_tree(c, cfg))
            .collect();
        Node::build(node.label.clone(), node.weight, children, cfg)
    }

    fn to_tree(&self) -> TreeNode {
        TreeNode {
            label: self.label.clone(),
            weight: self.weight,
            children: self.children.iter().map(|c| c.to_tree()).collect(),
        }
    }

    /// `w(p) * W(p)`, this node's term in its parent's weight sum.
    fn contribution(&self) -> f64 {
        self.weight as f64 * self.weight_value
    }
}

type MemoKey = (*const Node, *const Node);

struct Engine<'o> {
    options: &'o MergeOptions,
    memo: HashMap<MemoKey, Rc<Node>>,
    evaluated: u64,
    greedy_pairs: u64,
}

/// One merged child pair as seen by the matching search.
struct Cell {
    node: Rc<Node>,
    savings: usize,
    /// Change in the parent's weight sum relative to leaving the column
    /// child unmatched.
    gain: f64,
}

struct Search<'c> {
    cells: &'c [Vec<Cell>],
    row_class: Vec<usize>,
    col_class: Vec<usize>,
    /// Per row, columns ordered best-first.
    col_order: Vec<Vec<usize>>,
    /// Upper bounds over the rows `r..`.
    savings_suffix: Vec<usize>,
    gain_suffix: Vec<f64>,
    base_sum: f64,
    finite: bool,
    cfg: WeightConfig,
    budget: u64,
}

struct Best {
    savings: usize,
    weight: f64,
    weight_key: i64,
    assignment: Vec<usize>,
    node: Option<Rc<Node>>,
}

enum Outcome {
    Done,
    OverBudget,
}

impl<'o> Engine<'o> {
    fn new(options: &'o MergeOptions) -> Self {
        Self {
            options,
            memo: HashMap::new(),
            evaluated: 0,
            greedy_pairs: 0,
        }
    }

    fn merge(&mut self, a: &Rc<Node>, b: &Rc<Node>, weight: u64) -> Result<Rc<Node>, MergeError> {
        let key = (Rc::as_ptr(a), Rc::as_ptr(b));
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        let cfg = self.options.weights;
        let label = a.label.clone().or_else(|| b.label.clone());

        let merged = if a.children.is_empty() || b.children.is_empty() {
            self.evaluated += 1;
            let carried = if a.children.is_empty() {
                &b.children
            } else {
                &a.children
            };
            Node::build(label, weight, carried.clone(), &cfg)
        } else {
            let a_rows = a.children.len() <= b.children.len();
            let (rows, cols) = if a_rows {
                (&a.children, &b.children)
            } else {
                (&b.children, &a.children)
            };

            let mut cells = Vec::with_capacity(rows.len());
            for r in rows {
                let mut line = Vec::with_capacity(cols.len());
                for c in cols {
                    let node = if a_rows {
                        self.merge(r, c, r.weight + c.weight)?
                    } else {
                        self.merge(c, r, r.weight + c.weight)?
                    };
                    let savings = r.size + c.size - node.size;
                    let gain = node.contribution() - c.contribution();
                    line.push(Cell {
                        node,
                        savings,
                        gain,
                    });
                }
                cells.push(line);
            }

            let assignment = match self.search(rows, cols, &cells, &cfg) {
                Some(assignment) => assignment,
                None if self.options.greedy_fallback => {
                    self.greedy_pairs += 1;
                    // Both lists are in canonical order, largest subtree first.
                    (0..rows.len()).collect()
                }
                None => {
                    return Err(MergeError::CombinatorialBudgetExceeded {
                        budget: self.options.budget,
                    })
                }
            };
            assemble(label, weight, cols, &cells, &assignment, &cfg)
        };

        self.memo.insert(key, merged.clone());
        Ok(merged)
    }

    /// Exact search; `None` when the budget ran out.
    fn search(
        &mut self,
        rows: &[Rc<Node>],
        cols: &[Rc<Node>],
        cells: &[Vec<Cell>],
        cfg: &WeightConfig,
    ) -> Option<Vec<usize>> {
        let row_class = classes(rows);
        let col_class = classes(cols);

        let col_order = cells
            .iter()
            .map(|line| {
                let mut order: Vec<usize> = (0..line.len()).collect();
                order.sort_by(|&x, &y| {
                    line[y]
                        .savings
                        .cmp(&line[x].savings)
                        .then_with(|| line[y].gain.total_cmp(&line[x].gain))
                        .then(x.cmp(&y))
                });
                order
            })
            .collect();

        let n = rows.len();
        let mut savings_suffix = vec![0; n + 1];
        let mut gain_suffix = vec![0.0; n + 1];
        let mut finite = true;
        for r in (0..n).rev() {
            let max_s = cells[r].iter().map(|c| c.savings).max().unwrap_or(0);
            let max_g = cells[r]
                .iter()
                .map(|c| c.gain)
                .fold(f64::NEG_INFINITY, f64::max);
            finite &= cells[r].iter().all(|c| c.gain.is_finite());
            savings_suffix[r] = savings_suffix[r + 1] + max_s;
            gain_suffix[r] = gain_suffix[r + 1] + max_g;
        }
        let base_sum: f64 = cols.iter().map(|c| c.contribution()).sum();
        finite &= base_sum.is_finite();

        let search = Search {
            cells,
            row_class,
            col_class,
            col_order,
            savings_suffix,
            gain_suffix,
            base_sum,
            finite,
            cfg: *cfg,
            budget: self.options.budget,
        };
        let mut best: Option<Best> = None;
        let mut used = vec![false; cols.len()];
        let mut assignment = Vec::with_capacity(n);
        match search.dfs(
            0,
            0,
            0.0,
            &mut used,
            &mut assignment,
            &mut best,
            cols,
            &mut self.evaluated,
        ) {
            Outcome::Done => best.map(|b| b.assignment),
            Outcome::OverBudget => None,
        }
    }
}

impl Search<'_> {
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        row: usize,
        savings: usize,
        gain: f64,
        used: &mut [bool],
        assignment: &mut Vec<usize>,
        best: &mut Option<Best>,
        cols: &[Rc<Node>],
        evaluated: &mut u64,
    ) -> Outcome {
        *evaluated += 1;
        if *evaluated > self.budget {
            return Outcome::OverBudget;
        }

        if row == self.cells.len() {
            self.offer(savings, assignment, best, cols);
            return Outcome::Done;
        }

        if let Some(b) = best {
            let savings_bound = savings + self.savings_suffix[row];
            if savings_bound < b.savings {
                return Outcome::Done;
            }
            if savings_bound == b.savings && self.finite {
                let bound = self
                    .cfg
                    .internal_weight(self.base_sum + gain + self.gain_suffix[row]);
                if bound + 1e-7 < b.weight {
                    return Outcome::Done;
                }
            }
        }

        let previous_same_class = (row > 0 && self.row_class[row] == self.row_class[row - 1])
            .then(|| assignment[row - 1]);
        for &col in &self.col_order[row] {
            if used[col] {
                continue;
            }
            // Identical rows take increasing columns.
            if previous_same_class.is_some_and(|prev| col <= prev) {
                continue;
            }
            // Identical columns are used lowest index first.
            if col > 0 && self.col_class[col] == self.col_class[col - 1] && !used[col - 1] {
                continue;
            }
            let cell = &self.cells[row][col];
            used[col] = true;
            assignment.push(col);
            let outcome = self.dfs(
                row + 1,
                savings + cell.savings,
                gain + cell.gain,
                used,
                assignment,
                best,
                cols,
                evaluated,
            );
            assignment.pop();
            used[col] = false;
            if let Outcome::OverBudget = outcome {
                return outcome;
            }
        }
        Outcome::Done
    }

    fn offer(
        &self,
        savings: usize,
        assignment: &[usize],
        best: &mut Option<Best>,
        cols: &[Rc<Node>],
    ) {
        // Summed directly: gains are differences and turn into NaN once a
        // degenerate literal weight appears.
        let mut matched = vec![false; cols.len()];
        let mut sum = 0.0;
        for (row, &col) in assignment.iter().enumerate() {
            matched[col] = true;
            sum += self.cells[row][col].node.contribution();
        }
        for (col, node) in cols.iter().enumerate() {
            if !matched[col] {
                sum += node.contribution();
            }
        }
        let weight = self.cfg.internal_weight(sum);
        let weight_key = weights::quantize(weight);
        let ord = match best {
            None => Ordering::Greater,
            Some(b) => savings.cmp(&b.savings).then(weight_key.cmp(&b.weight_key)),
        };
        match ord {
            Ordering::Less => {}
            Ordering::Greater => {
                *best = Some(Best {
                    savings,
                    weight,
                    weight_key,
                    assignment: assignment.to_vec(),
                    node: None,
                });
            }
            Ordering::Equal => {
                let b = best.as_mut().expect("tie implies an incumbent");
                let incumbent = b
                    .node
                    .get_or_insert_with(|| {
                        assemble(None, 1, cols, self.cells, &b.assignment, &self.cfg)
                    })
                    .clone();
                let candidate = assemble(None, 1, cols, self.cells, assignment, &self.cfg);
                if cmp_structure_view(&*candidate, &*incumbent) == Ordering::Less {
                    b.assignment = assignment.to_vec();
                    b.node = Some(candidate);
                }
            }
        }
    }
}

/// Children of the merged node: matched cells plus unmatched columns.
fn assemble(
    label: Option<String>,
    weight: u64,
    cols: &[Rc<Node>],
    cells: &[Vec<Cell>],
    assignment: &[usize],
    cfg: &WeightConfig,
) -> Rc<Node> {
    let mut matched = vec![false; cols.len()];
    let mut children = Vec::with_capacity(cols.len());
    for (row, &col) in assignment.iter().enumerate() {
        matched[col] = true;
        children.push(cells[row][col].node.clone());
    }
    children.extend(
        cols.iter()
            .zip(&matched)
            .filter(|(_, &m)| !m)
            .map(|(c, _)| c.clone()),
    );
    Node::build(label, weight, children, cfg)
}

/// Class ids for a canonically sorted sibling list; structurally identical
/// neighbours share an id.
fn classes(nodes: &[Rc<Node>]) -> Vec<usize> {
    let mut ids = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let id = if i > 0 && cmp_structure_view(&**node, &*nodes[i - 1]) == Ordering::Equal {
            ids[i - 1]
        } else {
            i
        };
        ids.push(id);
    }
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{build_session_tree, parse_session_line};

    const S1: &str = "S01,student: doc_seed -> citation -> doc_1 -> citation -> doc_seed -> search";
    const S2: &str =
        "S02,postdoc: doc_seed -> journal -> doc_seed -> author -> doc_1 -> author -> doc_2";
    const S3: &str = "S03,student: doc_seed -> search -> doc_1 -> search -> doc_2 -> search -> doc_seed -> journal -> doc_seed -> citation -> doc_3";

    fn tree(line: &str) -> Tree {
        build_session_tree(&parse_session_line(line).unwrap())
    }

    fn n(w: u64, children: Vec<TreeNode>) -> TreeNode {
        TreeNode::leaf(w).with_children(children)
    }

    #[test]
    fn empty_is_identity() {
        let t = tree(S3);
        let opts = MergeOptions::default();
        assert_eq!(merge_pair(&Tree::empty(), &t, &opts).unwrap(), t);
        assert_eq!(merge_pair(&t, &Tree::empty(), &opts).unwrap(), t);
        assert!(merge_pair(&Tree::empty(), &Tree::empty(), &opts)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sessions_one_and_two() {
        let m = merge_pair(&tree(S1), &tree(S2), &MergeOptions::default()).unwrap();
        assert_eq!(m.node_count(), 5);
        assert_eq!(m.canonical_string(), "1(2(2,1),2)");
        let root = m.root.unwrap();
        assert_eq!(root.children[0].label.as_deref(), Some("citation"));
        assert_eq!(root.children[1].label.as_deref(), Some("search"));
    }

    #[test]
    fn self_merge_doubles_weights() {
        let t = tree(S3);
        let m = merge_pair(&t, &t, &MergeOptions::default()).unwrap();
        assert_eq!(m.canonical_string(), "1(2(2,2),2(2),2)");
    }

    #[test]
    fn merge_all_of_three_sessions() {
        let trees = [tree(S1), tree(S2), tree(S3)];
        let m = merge_all(&trees, &MergeOptions::default()).unwrap();
        assert_eq!(m.root.as_ref().unwrap().children.len(), 3);
        assert_eq!(m.total_edge_weight(), 3 + 4 + 6);
        assert_eq!(merge_order(&trees, &WeightConfig::default()), vec![0, 1, 2]);
    }

    #[test]
    fn empty_list_merges_to_empty_tree() {
        assert!(merge_all(&[], &MergeOptions::default()).unwrap().is_empty());
    }

    #[test]
    fn budget_exceeded_and_greedy_fallback() {
        // Two stars with six structurally distinct children each.
        let star = |offset: u64| {
            Tree::new(n(
                1,
                (0..6)
                    .map(|i| n(1, (0..(i + offset) % 6).map(|_| n(1, vec![])).collect()))
                    .collect(),
            ))
        };
        let (a, b) = (star(0), star(3));
        let tight = MergeOptions {
            budget: 10,
            ..MergeOptions::default()
        };
        assert_eq!(
            merge_pair(&a, &b, &tight),
            Err(MergeError::CombinatorialBudgetExceeded { budget: 10 })
        );
        let greedy = MergeOptions {
            greedy_fallback: true,
            ..tight
        };
        let outcome = merge_pair_outcome(&a, &b, &greedy).unwrap();
        assert!(outcome.greedy_pairs > 0);
        let exact = merge_pair(&a, &b, &MergeOptions::default()).unwrap();
        // Same size ordering on both sides, so pairing by rank is optimal here.
        assert_eq!(outcome.tree.node_count(), exact.node_count());
    }

    #[test]
    fn identical_children_enumerated_once() {
        let leaves = |k: usize| Tree::new(n(1, (0..k).map(|_| n(1, vec![])).collect()));
        let outcome = merge_pair_outcome(&leaves(8), &leaves(8), &MergeOptions::default()).unwrap();
        assert_eq!(
            outcome.tree.canonical_string(),
            format!("1({})", ["2"; 8].join(","))
        );
        assert!(
            outcome.evaluated_matchings < 100,
            "{}",
            outcome.evaluated_matchings
        );
    }

    #[test]
    fn literal_mode_merges_degenerate_chains() {
        let chain = Tree::new(n(1, vec![n(1, vec![n(1, vec![])])]));
        let opts = MergeOptions::with_weights(
            WeightConfig::new(weights::WeightMode::Literal, 2.0).unwrap(),
        );
        let m = merge_pair(&chain, &chain, &opts).unwrap();
        assert_eq!(m.canonical_string(), "1(2(2))");
    }
}
