//! Session logs and session-tree construction.
//!
//! One session per line:
//!
//! ```text
//! S01,student: doc_seed -> citation -> doc_1 -> citation -> doc_seed -> search
//! ```
//!
//! Replaying the tokens builds the tree: the first token is the root, a token
//! seen before moves the cursor back to its node, and a fresh token becomes a
//! child of the cursor's node.

use std::collections::HashMap;

use thiserror::Error;

use crate::tree::{canonical_sort, SessionTree, Tree, TreeNode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub session_id: String,
    pub group: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("malformed session line: {reason}")]
    MalformedLine { reason: String },
    #[error("line {line}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<SessionError>,
    },
}

fn malformed(reason: impl Into<String>) -> SessionError {
    SessionError::MalformedLine {
        reason: reason.into(),
    }
}

/// Parses `<id> ',' <group> ':' <token> (' -> ' <token>)*`.
pub fn parse_session_line(line: &str) -> Result<SessionRecord, SessionError> {
    let (id, rest) = line
        .split_once(',')
        .ok_or_else(|| malformed("missing ',' after session id"))?;
    let (group, sequence) = rest
        .split_once(':')
        .ok_or_else(|| malformed("missing ':' after group"))?;
    let id = id.trim();
    let group = group.trim();
    if id.is_empty() {
        return Err(malformed("empty session id"));
    }
    if group.is_empty() {
        return Err(malformed("empty group"));
    }

    let mut tokens: Vec<String> = Vec::new();
    for raw in sequence.split("->") {
        let token = raw.trim();
        if token.is_empty() {
            return Err(malformed("empty token"));
        }
        if token.contains([',', ':']) {
            return Err(malformed(format!("token {token:?} contains a separator")));
        }
        if tokens.last().is_some_and(|prev| prev == token) {
            return Err(malformed(format!("self-transition on {token:?}")));
        }
        tokens.push(token.to_string());
    }

    Ok(SessionRecord {
        session_id: id.to_string(),
        group: group.to_string(),
        tokens,
    })
}

/// Parses a whole log; blank lines and lines starting with `#` are skipped.
pub fn parse_session_log(text: &str) -> Result<Vec<SessionRecord>, SessionError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| {
            parse_session_line(l).map_err(|e| SessionError::AtLine {
                line: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Replays the record's tokens into a canonically sorted session tree.
pub fn build_session_tree(record: &SessionRecord) -> SessionTree {
    build_from_tokens(&record.tokens)
}

pub fn build_from_tokens<S: AsRef<str>>(tokens: &[S]) -> SessionTree {
    let Some(first) = tokens.first() else {
        return Tree::empty();
    };

    // Arena of (label, children) with node 0 as the root.
    let mut labels: Vec<&str> = vec![first.as_ref()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut index: HashMap<&str, usize> = HashMap::from([(first.as_ref(), 0)]);
    let mut cursor = 0;

    for token in &tokens[1..] {
        let token = token.as_ref();
        cursor = match index.get(token) {
            Some(&existing) => existing,
            None => {
                let id = labels.len();
                labels.push(token);
                children.push(Vec::new());
                children[cursor].push(id);
                index.insert(token, id);
                id
            }
        };
    }

    fn materialize(id: usize, labels: &[&str], children: &[Vec<usize>]) -> TreeNode {
        TreeNode {
            label: Some(labels[id].to_string()),
            weight: 1,
            children: children[id]
                .iter()
                .map(|&c| materialize(c, labels, children))
                .collect(),
        }
    }

    canonical_sort(&Tree::new(materialize(0, &labels, &children)))
}
