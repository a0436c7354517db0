//! Tree JSON: nested `{"label": ..., "weight": n, "children": [...]}` objects.
//!
//! The root object may carry an extra `"meta"` object (weighting mode, log
//! base, session count, ...). An empty tree is written as `null`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::tree::{Tree, TreeNode};

#[derive(Debug, Error)]
pub enum TreeIoError {
    #[error("cannot read or write {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid tree JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("tree invariant violated at node path {path:?}: {reason}")]
    InvariantViolation { path: Vec<usize>, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct RawNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    weight: i64,
    #[serde(default)]
    children: Vec<RawNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<Map<String, Value>>,
}

/// A loaded tree plus anything noteworthy found while validating it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTree {
    pub tree: Tree,
    pub meta: Option<Map<String, Value>>,
    /// Non-fatal findings, e.g. an edge heavier than its parent edge.
    pub warnings: Vec<String>,
}

pub fn tree_from_json(text: &str) -> Result<LoadedTree, TreeIoError> {
    let raw: Option<RawNode> = serde_json::from_str(text)?;
    let Some(mut raw) = raw else {
        return Ok(LoadedTree {
            tree: Tree::empty(),
            meta: None,
            warnings: Vec::new(),
        });
    };
    if raw.weight != 1 {
        return Err(TreeIoError::InvariantViolation {
            path: Vec::new(),
            reason: format!("root weight must be 1, found {}", raw.weight),
        });
    }
    let meta = raw.meta.take();
    let mut path = Vec::new();
    let root = convert(raw, &mut path)?;
    let tree = Tree::new(root);
    let warnings = tree
        .monotonicity_violation()
        .map(|p| {
            vec![format!(
                "edge at node path {p:?} is heavier than its parent edge"
            )]
        })
        .unwrap_or_default();
    Ok(LoadedTree {
        tree,
        meta,
        warnings,
    })
}

fn convert(raw: RawNode, path: &mut Vec<usize>) -> Result<TreeNode, TreeIoError> {
    if raw.weight < 1 {
        return Err(TreeIoError::InvariantViolation {
            path: path.clone(),
            reason: format!("edge weight must be at least 1, found {}", raw.weight),
        });
    }
    let mut children = Vec::with_capacity(raw.children.len());
    for (i, child) in raw.children.into_iter().enumerate() {
        path.push(i);
        children.push(convert(child, path)?);
        path.pop();
    }
    Ok(TreeNode {
        label: raw.label,
        weight: raw.weight as u64,
        children,
    })
}

fn to_raw(node: &TreeNode) -> RawNode {
    RawNode {
        label: node.label.clone(),
        weight: node.weight as i64,
        children: node.children.iter().map(to_raw).collect(),
        meta: None,
    }
}

/// Pretty-printed tree JSON, with `meta` attached to the root when given.
pub fn tree_to_json(tree: &Tree, meta: Option<Map<String, Value>>) -> String {
    let raw = tree.root.as_ref().map(|r| RawNode { meta, ..to_raw(r) });
    serde_json::to_string_pretty(&raw).expect("tree serialization cannot fail")
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<LoadedTree, TreeIoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TreeIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    tree_from_json(&text)
}

pub fn save_tree(tree: &Tree, path: impl AsRef<Path>) -> Result<(), TreeIoError> {
    save_tree_with_meta(tree, None, path)
}

pub fn save_tree_with_meta(
    tree: &Tree,
    meta: Option<Map<String, Value>>,
    path: impl AsRef<Path>,
) -> Result<(), TreeIoError> {
    let path = path.as_ref();
    let mut text = tree_to_json(tree, meta);
    text.push('\n');
    fs::write(path, text).map_err(|source| TreeIoError::Io {
        path: path.display().to_string(),
        source,
    })
}
