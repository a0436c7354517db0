mod common;

use std::collections::{BTreeMap, HashSet, VecDeque};

use common::*;
use proptest::prelude::*;
use session_trees::analysis::{prune_threshold, threshold_curve, tree_metrics};
use session_trees::dot::{export_dot, DotOptions};
use session_trees::io::{tree_from_json, tree_to_json};
use session_trees::merge::{merge_all, merge_pair, MergeOptions};
use session_trees::session::build_from_tokens;
use session_trees::weights::{subtree_weight, WeightConfig};
use session_trees::{canonical_sort, Tree, TreeNode};

/// Random token walks over a small alphabet without self-transitions.
fn token_walk() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(0u8..12, 1..30).prop_map(|raw| {
        let mut out: Vec<String> = Vec::new();
        for r in raw {
            let t = format!("o{r}");
            if out.last() != Some(&t) {
                out.push(t);
            }
        }
        out
    })
}

/// Token sequence that walks the tree depth first, returning to the parent
/// after each child.
fn euler_tour(node: &TreeNode, out: &mut Vec<String>) {
    out.push(node.label.clone().unwrap());
    for child in &node.children {
        euler_tour(child, out);
        out.push(node.label.clone().unwrap());
    }
}

fn subtree_shapes(node: &TreeNode, out: &mut BTreeMap<String, usize>) {
    *out.entry(session_trees::tree::canonical_sort_node(node).canonical_string())
        .or_default() += 1;
    for c in &node.children {
        subtree_shapes(c, out);
    }
}

fn shuffle_children(node: &TreeNode, seed: &mut u64) -> TreeNode {
    let mut kids: Vec<TreeNode> = node
        .children
        .iter()
        .map(|c| shuffle_children(c, seed))
        .collect();
    for i in (1..kids.len()).rev() {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        kids.swap(i, (*seed >> 33) as usize % (i + 1));
    }
    TreeNode {
        label: node.label.clone(),
        weight: node.weight,
        children: kids,
    }
}

fn all_weights(node: &TreeNode, cfg: &WeightConfig, out: &mut Vec<f64>) {
    out.push(subtree_weight(node, cfg).unwrap());
    for c in &node.children {
        all_weights(c, cfg, out);
    }
}

fn strip_labels(node: &TreeNode) -> TreeNode {
    TreeNode {
        label: None,
        weight: node.weight,
        children: node.children.iter().map(strip_labels).collect(),
    }
}

fn scale_weights(node: &TreeNode, k: u64, is_root: bool) -> TreeNode {
    TreeNode {
        label: node.label.clone(),
        weight: if is_root { 1 } else { node.weight * k },
        children: node
            .children
            .iter()
            .map(|c| scale_weights(c, k, false))
            .collect(),
    }
}

fn edges_monotone(node: &TreeNode, bound: u64) -> bool {
    node.weight <= bound && node.children.iter().all(|c| edges_monotone(c, node.weight))
}

fn path_monotone(tree: &Tree) -> bool {
    tree.root
        .as_ref()
        .is_none_or(|r| r.children.iter().all(|c| edges_monotone(c, u64::MAX)))
}

/// Random root-containing connected subtree, keeping each child with the
/// given bits.
fn sub_embedding(node: &TreeNode, bits: &mut impl Iterator<Item = bool>) -> TreeNode {
    let mut children = Vec::new();
    for c in &node.children {
        if bits.next().unwrap_or(true) {
            children.push(sub_embedding(c, bits));
        }
    }
    TreeNode {
        label: node.label.clone(),
        weight: node.weight,
        children,
    }
}

/// All-pairs BFS over the undirected tree.
fn bfs_diameter_and_depth(tree: &Tree) -> (usize, usize) {
    let mut adj: Vec<Vec<usize>> = Vec::new();
    fn index(node: &TreeNode, parent: Option<usize>, adj: &mut Vec<Vec<usize>>) {
        let id = adj.len();
        adj.push(Vec::new());
        if let Some(p) = parent {
            adj[p].push(id);
            adj[id].push(p);
        }
        for c in &node.children {
            index(c, Some(id), adj);
        }
    }
    index(tree.root.as_ref().unwrap(), None, &mut adj);
    let bfs = |s: usize| {
        let mut dist = vec![usize::MAX; adj.len()];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        dist.into_iter().max().unwrap()
    };
    let diameter = (0..adj.len()).map(bfs).max().unwrap();
    (diameter, bfs(0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // Session model.

    #[test]
    fn node_count_equals_distinct_tokens(tokens in token_walk()) {
        let distinct: HashSet<&String> = tokens.iter().collect();
        prop_assert_eq!(build_from_tokens(&tokens).node_count(), distinct.len());
    }

    #[test]
    fn replaying_a_trees_walk_rebuilds_it(tokens in token_walk()) {
        let tree = build_from_tokens(&tokens);
        let mut tour = Vec::new();
        euler_tour(tree.root.as_ref().unwrap(), &mut tour);
        prop_assert_eq!(build_from_tokens(&tour), tree.clone());
        prop_assert_eq!(build_from_tokens(&tokens), tree);
    }

    #[test]
    fn canonical_sort_idempotent_and_shape_preserving(t in weighted_tree_strategy(25, 5), seed in any::<u64>()) {
        let mut seed = seed;
        let shuffled = Tree::new(shuffle_children(t.root.as_ref().unwrap(), &mut seed));
        let sorted = canonical_sort(&shuffled);
        prop_assert_eq!(canonical_sort(&sorted), sorted.clone());
        // Order of children never matters to the canonical form.
        prop_assert_eq!(sorted.canonical_string(), t.canonical_string());
        let (mut before, mut after) = (BTreeMap::new(), BTreeMap::new());
        subtree_shapes(shuffled.root.as_ref().unwrap(), &mut before);
        subtree_shapes(sorted.root.as_ref().unwrap(), &mut after);
        prop_assert_eq!(before, after);
    }

    // Weights.

    #[test]
    fn stabilized_weights_are_at_least_one(t in weighted_tree_strategy(30, 6)) {
        let mut ws = Vec::new();
        all_weights(t.root.as_ref().unwrap(), &stabilized(), &mut ws);
        prop_assert!(ws.iter().all(|&w| w >= 1.0), "{:?}", ws);
    }

    #[test]
    fn weights_ignore_labels(t in weighted_tree_strategy(20, 5)) {
        let root = t.root.as_ref().unwrap();
        for cfg in [stabilized(), literal()] {
            let a = subtree_weight(root, &cfg);
            let b = subtree_weight(&strip_labels(root), &cfg);
            prop_assert_eq!(a.is_ok(), b.is_ok());
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn doubling_edge_weights_increases_every_weight(t in weighted_tree_strategy(20, 5)) {
        let doubled = scale_weights(t.root.as_ref().unwrap(), 2, true);
        let (mut before, mut after) = (Vec::new(), Vec::new());
        all_weights(t.root.as_ref().unwrap(), &stabilized(), &mut before);
        all_weights(&doubled, &stabilized(), &mut after);
        // A lone root has no edge to double; otherwise the root grows through its children.
        let skip = usize::from(t.node_count() == 1);
        for (b, a) in before.iter().zip(&after).skip(skip) {
            prop_assert!(a > b, "{} !> {}", a, b);
        }

        // Literal mode wherever it is defined with non-negative weights.
        let lit = literal();
        let collect = |n: &TreeNode| -> Option<Vec<f64>> {
            let mut out = Vec::new();
            fn go(n: &TreeNode, cfg: &WeightConfig, out: &mut Vec<f64>) -> bool {
                match subtree_weight(n, cfg) {
                    Ok(w) if w >= 0.0 => out.push(w),
                    _ => return false,
                }
                n.children.iter().all(|c| go(c, cfg, out))
            }
            go(n, &lit, &mut out).then_some(out)
        };
        if let (Some(b), Some(a)) = (collect(t.root.as_ref().unwrap()), collect(&doubled)) {
            for (b, a) in b.iter().zip(&a).skip(skip) {
                prop_assert!(a > b);
            }
        }
    }

    // Merge.

    #[test]
    fn merge_conserves_weight_and_keeps_paths_monotone(trees in prop::collection::vec(session_tree_strategy(15, 5), 0..10)) {
        let m = merge_all(&trees, &MergeOptions::default()).unwrap();
        let expected: u64 = trees.iter().map(|t| t.node_count() as u64 - 1).sum();
        prop_assert_eq!(m.total_edge_weight(), expected);
        prop_assert!(path_monotone(&m));
        prop_assert_eq!(m.monotonicity_violation(), None);
    }

    #[test]
    fn merged_size_bounds(a in weighted_tree_strategy(20, 5), b in weighted_tree_strategy(20, 5)) {
        let m = merge_pair(&a, &b, &MergeOptions::default()).unwrap();
        prop_assert!(m.node_count() >= a.node_count().max(b.node_count()));
        prop_assert!(m.node_count() < a.node_count() + b.node_count());
    }

    #[test]
    fn embedded_tree_adds_no_nodes(a in session_tree_strategy(25, 6), bits in prop::collection::vec(any::<bool>(), 0..30)) {
        let mut it = bits.into_iter();
        let b = canonical_sort(&Tree::new(sub_embedding(a.root.as_ref().unwrap(), &mut it)));
        let m = merge_pair(&a, &b, &MergeOptions::default()).unwrap();
        prop_assert_eq!(m.node_count(), a.node_count());
    }

    #[test]
    fn self_merge_of_session_tree_doubles(t in session_tree_strategy(30, 6)) {
        let m = merge_pair(&t, &t, &MergeOptions::default()).unwrap();
        let doubled = canonical_sort(&Tree::new(scale_weights(t.root.as_ref().unwrap(), 2, true)));
        prop_assert_eq!(m.canonical_string(), doubled.canonical_string());
    }

    // With arbitrary weights another matching can tie on node count and
    // beat the full matching on W, so only the count and W bound hold.
    #[test]
    fn self_merge_keeps_node_count(t in weighted_tree_strategy(25, 6)) {
        let m = merge_pair(&t, &t, &MergeOptions::default()).unwrap();
        let doubled = canonical_sort(&Tree::new(scale_weights(t.root.as_ref().unwrap(), 2, true)));
        prop_assert_eq!(m.node_count(), t.node_count());
        prop_assert_eq!(m.total_edge_weight(), 2 * t.total_edge_weight());
        let cfg = stabilized();
        let wm = subtree_weight(m.root.as_ref().unwrap(), &cfg).unwrap();
        let wd = subtree_weight(doubled.root.as_ref().unwrap(), &cfg).unwrap();
        prop_assert!(wm >= wd - 1e-12, "{} < {}", wm, wd);
    }

    #[test]
    fn merge_all_ignores_input_order(trees in prop::collection::vec(session_tree_strategy(15, 5), 1..8), seed in any::<u64>()) {
        let reference = tree_to_json(&merge_all(&trees, &MergeOptions::default()).unwrap(), None);
        let mut shuffled = trees.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(tree_to_json(&merge_all(&shuffled, &MergeOptions::default()).unwrap(), None), reference);
    }

    // Analysis.

    #[test]
    fn pruning_composes_and_matches_curve(trees in prop::collection::vec(session_tree_strategy(12, 4), 1..8), a in 1u64..6, b in 1u64..6) {
        let m = merge_all(&trees, &MergeOptions::default()).unwrap();
        prop_assert_eq!(prune_threshold(&prune_threshold(&m, a), b), prune_threshold(&m, a.max(b)));
        prop_assert_eq!(prune_threshold(&m, 1), m.clone());
        let curve = threshold_curve(&m);
        prop_assert_eq!(curve.points.first().copied(), Some((1, m.node_count())));
        prop_assert_eq!(curve.points.last().copied(), Some((m.max_edge_weight() + 1, 1)));
        for w in curve.points.windows(2) {
            prop_assert!(w[1].1 <= w[0].1);
        }
        for &(t, n) in &curve.points {
            prop_assert_eq!(prune_threshold(&m, t).node_count(), n);
        }
    }

    #[test]
    fn metrics_agree_with_bfs(t in weighted_tree_strategy(40, 6)) {
        let m = tree_metrics(&t, &stabilized()).unwrap();
        let (diameter, depth) = bfs_diameter_and_depth(&t);
        prop_assert_eq!(m.diameter, diameter);
        prop_assert_eq!(m.depth, depth);
        prop_assert!(m.depth <= m.diameter && m.diameter <= 2 * m.depth);
        prop_assert_eq!(m.per_level_breadth.iter().sum::<usize>(), m.node_count);
        prop_assert_eq!(m.node_count, t.node_count());
    }

    // I/O and DOT.

    #[test]
    fn json_round_trip(t in weighted_tree_strategy(30, 6)) {
        let back = tree_from_json(&tree_to_json(&t, None)).unwrap();
        prop_assert_eq!(back.tree, t);
    }

    #[test]
    fn dot_distinguishes_distinct_trees(a in weighted_tree_strategy(8, 3), b in weighted_tree_strategy(8, 3)) {
        let opts = DotOptions::default();
        let (da, db) = (export_dot(&a, &opts).unwrap(), export_dot(&b, &opts).unwrap());
        prop_assert_eq!(da == db, a.canonical_string() == b.canonical_string());
        prop_assert_eq!(export_dot(&a, &opts).unwrap(), da);
    }
}
