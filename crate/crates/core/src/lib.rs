//! Session trees for exploratory-search logs.
//!
//! Sessions are parsed into rooted trees ([`session`]), combined into one
//! weighted tree by optimal pairwise merging ([`merge`]) and analysed by edge
//! weight threshold ([`analysis`]). [`stats`] and [`gaze`] cover the group
//! comparisons and eye-tracking aggregation that accompany the tree analysis.

pub mod analysis;
pub mod dot;
pub mod gaze;
pub mod io;
pub mod merge;
pub mod session;
pub mod stats;
pub mod tree;
pub mod weights;

pub use analysis::{prune_threshold, threshold_curve, tree_metrics, ThresholdCurve, TreeMetrics};
pub use merge::{merge_all, merge_pair, MergeError, MergeOptions};
pub use session::{build_session_tree, parse_session_line, SessionRecord};
pub use tree::{canonical_sort, CombinedTree, SessionTree, Tree, TreeNode};
pub use weights::{subtree_weight, WeightConfig, WeightMode};
