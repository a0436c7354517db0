//! Test support: tree generators and an exhaustive merge oracle that shares no
//! code with the library's search.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::HashMap;

use proptest::prelude::*;
use session_trees::{Tree, TreeNode, WeightConfig, WeightMode};

/// Builds a tree from parent choices: node `i + 1` attaches to an eligible
/// earlier node picked by `choices[i]`; nodes with `max_fanout` children are
/// no longer eligible.
pub fn tree_from_choices(choices: &[u32], max_fanout: usize, weights: Option<&[u64]>) -> Tree {
    let n = choices.len() + 1;
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &c) in choices.iter().enumerate() {
        let eligible: Vec<usize> = (0..=i)
            .filter(|&p| children[p].len() < max_fanout)
            .collect();
        let parent = eligible[c as usize % eligible.len()];
        children[parent].push(i + 1);
    }
    fn build(id: usize, children: &[Vec<usize>], weights: Option<&[u64]>) -> TreeNode {
        let weight = if id == 0 {
            1
        } else {
            weights.map_or(1, |w| w[(id - 1) % w.len()])
        };
        TreeNode {
            label: Some(format!("t{id}")),
            weight,
            children: children[id]
                .iter()
                .map(|&c| build(c, children, weights))
                .collect(),
        }
    }
    session_trees::canonical_sort(&Tree::new(build(0, &children, weights)))
}

pub fn session_tree_strategy(max_nodes: usize, max_fanout: usize) -> impl Strategy<Value = Tree> {
    prop::collection::vec(any::<u32>(), 0..max_nodes)
        .prop_map(move |c| tree_from_choices(&c, max_fanout, None))
}

/// Trees with arbitrary (not necessarily path-monotone) weights in 1..=4.
pub fn weighted_tree_strategy(max_nodes: usize, max_fanout: usize) -> impl Strategy<Value = Tree> {
    (
        prop::collection::vec(any::<u32>(), 0..max_nodes),
        prop::collection::vec(1u64..=4, 1..8),
    )
        .prop_map(move |(c, w)| tree_from_choices(&c, max_fanout, Some(&w)))
}

pub fn stabilized() -> WeightConfig {
    WeightConfig::default()
}

pub fn literal() -> WeightConfig {
    WeightConfig::new(WeightMode::Literal, 2.0).unwrap()
}

// ---------------------------------------------------------------------------
// Oracle

/// Plain node: weight and children, no labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ONode {
    pub w: u64,
    pub kids: Vec<ONode>,
}

impl ONode {
    pub fn from_tree(node: &TreeNode) -> ONode {
        ONode {
            w: node.weight,
            kids: node.children.iter().map(ONode::from_tree).collect(),
        }
    }

    pub fn size(&self) -> usize {
        1 + self.kids.iter().map(ONode::size).sum::<usize>()
    }

    /// Token stream: 1 opens a node, the weight follows as w + 2, 0 closes.
    pub fn tokens(&self) -> Vec<u64> {
        let mut out = Vec::new();
        fn go(n: &ONode, out: &mut Vec<u64>) {
            out.push(1);
            out.push(n.w + 2);
            for k in &n.kids {
                go(k, out);
            }
            out.push(0);
        }
        go(self, &mut out);
        out
    }
}

impl std::fmt::Display for ONode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.w)?;
        if !self.kids.is_empty() {
            let inner: Vec<String> = self.kids.iter().map(ONode::to_string).collect();
            write!(f, "({})", inner.join(","))?;
        }
        Ok(())
    }
}

fn log_base(x: f64, base: f64) -> f64 {
    x.ln() / base.ln()
}

/// Subtree weight with degenerate literal arguments mapped to -inf.
pub fn oracle_weight(n: &ONode, cfg: &WeightConfig) -> f64 {
    if n.kids.is_empty() {
        return log_base(2.0 * n.w as f64, cfg.log_base);
    }
    let sum: f64 = n
        .kids
        .iter()
        .map(|k| k.w as f64 * oracle_weight(k, cfg))
        .sum();
    let arg = match cfg.mode {
        WeightMode::Literal => sum,
        WeightMode::Stabilized => 2.0 * sum,
    };
    if arg > 0.0 && arg.is_finite() {
        log_base(arg, cfg.log_base)
    } else {
        f64::NEG_INFINITY
    }
}

fn q(w: f64) -> i64 {
    if w.is_finite() {
        (w * 1e9).round() as i64
    } else {
        i64::MIN
    }
}

/// Canonical sibling order: size desc, stabilized base-2 weight desc, tokens asc.
pub fn oracle_sort(n: &ONode) -> ONode {
    let mut kids: Vec<ONode> = n.kids.iter().map(oracle_sort).collect();
    let canon = WeightConfig::default();
    kids.sort_by(|a, b| {
        b.size()
            .cmp(&a.size())
            .then_with(|| q(oracle_weight(b, &canon)).cmp(&q(oracle_weight(a, &canon))))
            .then_with(|| a.tokens().cmp(&b.tokens()))
    });
    ONode { w: n.w, kids }
}

/// Every partial injective matching between `0..k` and `0..m`, as a list of
/// pairs.
pub fn all_matchings(k: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(
        i: usize,
        k: usize,
        m: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if i == k {
            out.push(cur.clone());
            return;
        }
        go(i + 1, k, m, used, cur, out);
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push((i, j));
                go(i + 1, k, m, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(0, k, m, &mut vec![false; m], &mut Vec::new(), &mut out);
    out
}

pub struct Oracle {
    pub cfg: WeightConfig,
    memo: HashMap<(ONode, ONode, u64), ONode>,
}

impl Oracle {
    pub fn new(cfg: WeightConfig) -> Self {
        Self {
            cfg,
            memo: HashMap::new(),
        }
    }

    /// Exhaustive optimal merge of two nodes, the result carrying `weight`.
    pub fn merge(&mut self, a: &ONode, b: &ONode, weight: u64) -> ONode {
        let key = (a.clone(), b.clone(), weight);
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let mut best: Option<(usize, i64, Vec<u64>, ONode)> = None;
        for matching in all_matchings(a.kids.len(), b.kids.len()) {
            let mut kids = Vec::new();
            let mut used_a = vec![false; a.kids.len()];
            let mut used_b = vec![false; b.kids.len()];
            for &(i, j) in &matching {
                used_a[i] = true;
                used_b[j] = true;
                kids.push(self.merge(&a.kids[i], &b.kids[j], a.kids[i].w + b.kids[j].w));
            }
            kids.extend(
                a.kids
                    .iter()
                    .zip(&used_a)
                    .filter(|(_, &u)| !u)
                    .map(|(k, _)| k.clone()),
            );
            kids.extend(
                b.kids
                    .iter()
                    .zip(&used_b)
                    .filter(|(_, &u)| !u)
                    .map(|(k, _)| k.clone()),
            );
            let cand = oracle_sort(&ONode { w: weight, kids });
            let size = cand.size();
            let wq = q(oracle_weight(&cand, &self.cfg));
            let tokens = cand.tokens();
            let better = match &best {
                None => true,
                Some((bs, bw, bt, _)) => match size.cmp(bs) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => match wq.cmp(bw) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => tokens < *bt,
                    },
                },
            };
            if better {
                best = Some((size, wq, tokens, cand));
            }
        }
        let result = best.expect("at least the empty matching").3;
        self.memo.insert(key, result.clone());
        result
    }

    pub fn merge_trees(&mut self, a: &Tree, b: &Tree) -> Option<ONode> {
        match (&a.root, &b.root) {
            (None, None) => None,
            (Some(r), None) | (None, Some(r)) => Some(oracle_sort(&ONode::from_tree(r))),
            (Some(x), Some(y)) => Some(self.merge(&ONode::from_tree(x), &ONode::from_tree(y), 1)),
        }
    }

    /// Sorted fold: ascending root weight, then tokens.
    pub fn merge_all(&mut self, trees: &[Tree]) -> Option<ONode> {
        let mut nodes: Vec<ONode> = trees
            .iter()
            .filter_map(|t| t.root.as_ref().map(|r| oracle_sort(&ONode::from_tree(r))))
            .collect();
        let cfg = self.cfg;
        nodes.sort_by(|a, b| {
            q(oracle_weight(a, &cfg))
                .cmp(&q(oracle_weight(b, &cfg)))
                .then_with(|| a.tokens().cmp(&b.tokens()))
        });
        let mut acc: Option<ONode> = None;
        for n in nodes {
            acc = Some(match acc {
                None => n,
                Some(prev) => self.merge(&prev, &n, 1),
            });
        }
        acc
    }
}

/// Session trees of the three example sessions.
pub const S1: &str = "S01,student: doc_seed -> citation -> doc_1 -> citation -> doc_seed -> search";
pub const S2: &str =
    "S02,postdoc: doc_seed -> journal -> doc_seed -> author -> doc_1 -> author -> doc_2";
pub const S3: &str = "S03,student: doc_seed -> search -> doc_1 -> search -> doc_2 -> search -> doc_seed -> journal -> doc_seed -> citation -> doc_3";

pub fn session(line: &str) -> Tree {
    session_trees::build_session_tree(&session_trees::parse_session_line(line).unwrap())
}
