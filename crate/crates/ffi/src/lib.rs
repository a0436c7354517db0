//! C ABI over `session-trees`.
//!
//! Trees cross the boundary as opaque `StTree` handles. Every function
//! returns an `StStatus`; on failure a message is available from
//! `st_last_error_message` on the same thread. Handles and strings handed
//! out by this library must be released with `st_tree_free` and
//! `st_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use session_trees::analysis::prune_threshold;
use session_trees::io::{tree_from_json, tree_to_json};
use session_trees::merge::{self, MergeError, MergeOptions, DEFAULT_BUDGET};
use session_trees::session::{build_session_tree, parse_session_line};
use session_trees::stats::{mann_whitney_u_alpha, Method, MethodUsed};
use session_trees::weights::{tree_weight, WeightConfig, WeightMode};
use session_trees::Tree;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed session line or tree JSON.
    Parse = 3,
    InvalidArgument = 4,
    BudgetExceeded = 5,
    /// Subtree weight undefined (literal weighting degenerated).
    Weight = 6,
    Empty = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StWeightMode {
    Stabilized = 0,
    Literal = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StMethod {
    Auto = 0,
    Exact = 1,
    Normal = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StMergeOptions {
    pub mode: StWeightMode,
    pub log_base: f64,
    pub budget: u64,
    pub greedy_fallback: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StMannWhitney {
    pub u_statistic: f64,
    pub n1: usize,
    pub n2: usize,
    pub p_value: f64,
    /// `ST_METHOD_EXACT` or `ST_METHOD_NORMAL`.
    pub method: u32,
    pub degenerate: bool,
    pub significant: bool,
}

/// Opaque tree handle.
pub struct StTree {
    tree: Tree,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (StStatus, String);

fn fail<T>(status: StStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err((status, message.into()))
}

/// Runs `f`, recording its error message and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> StStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            return StStatus::Ok;
        }
        Ok(Err(failure)) => failure,
        Err(payload) => {
            let text = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            (StStatus::Panic, format!("panic: {text}"))
        }
    };
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
    status
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(StStatus::NullPointer, "string argument is null");
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(StStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

unsafe fn read_tree<'a>(p: *const StTree) -> Result<&'a Tree, Failure> {
    p.as_ref()
        .map(|h| &h.tree)
        .ok_or_else(|| (StStatus::NullPointer, "tree handle is null".to_string()))
}

unsafe fn write_tree(out: *mut *mut StTree, tree: Tree) -> Result<(), Failure> {
    *out = Box::into_raw(Box::new(StTree { tree }));
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    let c = CString::new(text)
        .or_else(|_| fail(StStatus::InvalidArgument, "output contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return fail(StStatus::NullPointer, "output pointer is null");
    }
    Ok(())
}

fn weight_config(mode: StWeightMode, log_base: f64) -> Result<WeightConfig, Failure> {
    let mode = match mode {
        StWeightMode::Stabilized => WeightMode::Stabilized,
        StWeightMode::Literal => WeightMode::Literal,
    };
    WeightConfig::new(mode, log_base).or_else(|e| fail(StStatus::InvalidArgument, e.to_string()))
}

unsafe fn merge_options(p: *const StMergeOptions) -> Result<MergeOptions, Failure> {
    let Some(o) = p.as_ref() else {
        return Ok(MergeOptions::default());
    };
    Ok(MergeOptions {
        weights: weight_config(o.mode, o.log_base)?,
        budget: o.budget,
        greedy_fallback: o.greedy_fallback,
    })
}

fn merge_failure(e: MergeError) -> Failure {
    (StStatus::BudgetExceeded, e.to_string())
}

/// Default merge options: stabilized weighting, base 2, budget 10^7, no
/// greedy fallback.
#[no_mangle]
pub extern "C" fn st_merge_options_default() -> StMergeOptions {
    StMergeOptions {
        mode: StWeightMode::Stabilized,
        log_base: 2.0,
        budget: DEFAULT_BUDGET,
        greedy_fallback: false,
    }
}

/// Builds a session tree from one log line `<id>,<group>: a -> b -> ...`.
///
/// # Safety
/// `line` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_tree_from_session_line(
    line: *const c_char,
    out: *mut *mut StTree,
) -> StStatus {
    guard(|| {
        check_out(out)?;
        let record = parse_session_line(read_str(line)?)
            .or_else(|e| fail(StStatus::Parse, e.to_string()))?;
        write_tree(out, build_session_tree(&record))
    })
}

/// Parses tree JSON; `null` yields the empty tree. Metadata is ignored.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_tree_from_json(json: *const c_char, out: *mut *mut StTree) -> StStatus {
    guard(|| {
        check_out(out)?;
        let loaded =
            tree_from_json(read_str(json)?).or_else(|e| fail(StStatus::Parse, e.to_string()))?;
        write_tree(out, loaded.tree)
    })
}

/// Serializes a tree as pretty-printed JSON; free the result with
/// `st_string_free`.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_tree_to_json(tree: *const StTree, out: *mut *mut c_char) -> StStatus {
    guard(|| {
        check_out(out)?;
        write_string(out, tree_to_json(read_tree(tree)?, None))
    })
}

/// Compact structural form, e.g. `1(2(2,1),2)`; free with `st_string_free`.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_tree_canonical_string(
    tree: *const StTree,
    out: *mut *mut c_char,
) -> StStatus {
    guard(|| {
        check_out(out)?;
        write_string(out, read_tree(tree)?.canonical_string())
    })
}

/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_tree_node_count(tree: *const StTree, out: *mut usize) -> StStatus {
    guard(|| {
        check_out(out)?;
        *out = read_tree(tree)?.node_count();
        Ok(())
    })
}

/// Optimal merge of two trees. `options` may be null for the defaults.
///
/// # Safety
/// `a` and `b` must be live handles; `options` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn st_merge_pair(
    a: *const StTree,
    b: *const StTree,
    options: *const StMergeOptions,
    out: *mut *mut StTree,
) -> StStatus {
    guard(|| {
        check_out(out)?;
        let (a, b) = (read_tree(a)?, read_tree(b)?);
        let merged = merge::merge_pair(a, b, &merge_options(options)?).map_err(merge_failure)?;
        write_tree(out, merged)
    })
}

/// Merges `len` trees in ascending subtree-weight order. `options` may be
/// null for the defaults.
///
/// # Safety
/// `trees` must point to `len` live handles (or be null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn st_merge_all(
    trees: *const *const StTree,
    len: usize,
    options: *const StMergeOptions,
    out: *mut *mut StTree,
) -> StStatus {
    guard(|| {
        check_out(out)?;
        if trees.is_null() && len > 0 {
            return fail(StStatus::NullPointer, "tree array is null");
        }
        let handles = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(trees, len)
        };
        let owned: Vec<Tree> = handles
            .iter()
            .map(|&h| read_tree(h).cloned())
            .collect::<Result<_, _>>()?;
        let merged = merge::merge_all(&owned, &merge_options(options)?).map_err(merge_failure)?;
        write_tree(out, merged)
    })
}

/// Removes every edge lighter than `threshold` together with its subtree.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_prune(
    tree: *const StTree,
    threshold: u64,
    out: *mut *mut StTree,
) -> StStatus {
    guard(|| {
        check_out(out)?;
        write_tree(out, prune_threshold(read_tree(tree)?, threshold))
    })
}

/// Root subtree weight; 0 for the empty tree. Fails with `ST_STATUS_WEIGHT`
/// when literal weighting takes the logarithm of a non-positive value.
///
/// # Safety
/// `tree` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_subtree_weight(
    tree: *const StTree,
    mode: StWeightMode,
    log_base: f64,
    out: *mut f64,
) -> StStatus {
    guard(|| {
        check_out(out)?;
        let config = weight_config(mode, log_base)?;
        *out = tree_weight(read_tree(tree)?, &config)
            .or_else(|e| fail(StStatus::Weight, e.to_string()))?;
        Ok(())
    })
}

/// Two-sided Mann-Whitney U test of `a` against `b`.
///
/// # Safety
/// `a` and `b` must point to `n1` and `n2` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn st_mann_whitney(
    a: *const f64,
    n1: usize,
    b: *const f64,
    n2: usize,
    method: StMethod,
    alpha: f64,
    out: *mut StMannWhitney,
) -> StStatus {
    guard(|| {
        check_out(out)?;
        if n1 == 0 || n2 == 0 {
            return fail(StStatus::Empty, "both samples must be non-empty");
        }
        if a.is_null() || b.is_null() {
            return fail(StStatus::NullPointer, "sample pointer is null");
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return fail(
                StStatus::InvalidArgument,
                format!("alpha must lie in (0, 1), got {alpha}"),
            );
        }
        let (a, b) = (
            std::slice::from_raw_parts(a, n1),
            std::slice::from_raw_parts(b, n2),
        );
        let method = match method {
            StMethod::Auto => Method::Auto,
            StMethod::Exact => Method::Exact,
            StMethod::Normal => Method::Normal,
        };
        let r = mann_whitney_u_alpha(a, b, method, alpha)
            .or_else(|e| fail(StStatus::InvalidArgument, e.to_string()))?;
        *out = StMannWhitney {
            u_statistic: r.u_statistic,
            n1: r.n1,
            n2: r.n2,
            p_value: r.p_value,
            method: match r.method {
                MethodUsed::Exact => StMethod::Exact as u32,
                MethodUsed::NormalApprox => StMethod::Normal as u32,
            },
            degenerate: r.degenerate,
            significant: r.significant(),
        };
        Ok(())
    })
}

/// Releases a tree handle; null is ignored.
///
/// # Safety
/// `tree` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn st_tree_free(tree: *mut StTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn st_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn st_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}
