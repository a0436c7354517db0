#ifndef SESSION_TREES_H
#define SESSION_TREES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StWeightMode {
  ST_WEIGHT_MODE_STABILIZED = 0,
  ST_WEIGHT_MODE_LITERAL = 1,
} StWeightMode;

/**
 * Result code of every call.
 */
typedef enum StStatus {
  ST_STATUS_OK = 0,
  ST_STATUS_NULL_POINTER = 1,
  ST_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed session line or tree JSON.
   */
  ST_STATUS_PARSE = 3,
  ST_STATUS_INVALID_ARGUMENT = 4,
  ST_STATUS_BUDGET_EXCEEDED = 5,
  /**
   * Subtree weight undefined (literal weighting degenerated).
   */
  ST_STATUS_WEIGHT = 6,
  ST_STATUS_EMPTY = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  ST_STATUS_PANIC = 8,
} StStatus;

typedef enum StMethod {
  ST_METHOD_AUTO = 0,
  ST_METHOD_EXACT = 1,
  ST_METHOD_NORMAL = 2,
} StMethod;

/**
 * Opaque tree handle.
 */
typedef struct StTree StTree;

typedef struct StMergeOptions {
  enum StWeightMode mode;
  double log_base;
  uint64_t budget;
  bool greedy_fallback;
} StMergeOptions;

typedef struct StMannWhitney {
  double u_statistic;
  size_t n1;
  size_t n2;
  double p_value;
  /**
   * `ST_METHOD_EXACT` or `ST_METHOD_NORMAL`.
   */
  uint32_t method;
  bool degenerate;
  bool significant;
} StMannWhitney;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default merge options: stabilized weighting, base 2, budget 10^7, no
 * greedy fallback.
 */
struct StMergeOptions st_merge_options_default(void);

/**
 * Builds a session tree from one log line `<id>,<group>: a -> b -> ...`.
 *
 * # Safety
 * `line` must be a NUL-terminated string; `out` must be writable.
 */
enum StStatus st_tree_from_session_line(const char *line, struct StTree **out);

/**
 * Parses tree JSON; `null` yields the empty tree. Metadata is ignored.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum StStatus st_tree_from_json(const char *json, struct StTree **out);

/**
 * Serializes a tree as pretty-printed JSON; free the result with
 * `st_string_free`.
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum StStatus st_tree_to_json(const struct StTree *tree, char **out);

/**
 * Compact structural form, e.g. `1(2(2,1),2)`; free with `st_string_free`.
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum StStatus st_tree_canonical_string(const struct StTree *tree, char **out);

/**
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum StStatus st_tree_node_count(const struct StTree *tree, size_t *out);

/**
 * Optimal merge of two trees. `options` may be null for the defaults.
 *
 * # Safety
 * `a` and `b` must be live handles; `options` null or valid; `out` writable.
 */
enum StStatus st_merge_pair(const struct StTree *a,
                            const struct StTree *b,
                            const struct StMergeOptions *options,
                            struct StTree **out);

/**
 * Merges `len` trees in ascending subtree-weight order. `options` may be
 * null for the defaults.
 *
 * # Safety
 * `trees` must point to `len` live handles (or be null when `len` is 0).
 */
enum StStatus st_merge_all(const struct StTree *const *trees,
                           size_t len,
                           const struct StMergeOptions *options,
                           struct StTree **out);

/**
 * Removes every edge lighter than `threshold` together with its subtree.
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum StStatus st_prune(const struct StTree *tree, uint64_t threshold, struct StTree **out);

/**
 * Root subtree weight; 0 for the empty tree. Fails with `ST_STATUS_WEIGHT`
 * when literal weighting takes the logarithm of a non-positive value.
 *
 * # Safety
 * `tree` must be a live handle; `out` must be writable.
 */
enum StStatus st_subtree_weight(const struct StTree *tree,
                                enum StWeightMode mode,
                                double log_base,
                                double *out);

/**
 * Two-sided Mann-Whitney U test of `a` against `b`.
 *
 * # Safety
 * `a` and `b` must point to `n1` and `n2` doubles; `out` must be writable.
 */
enum StStatus st_mann_whitney(const double *a,
                              size_t n1,
                              const double *b,
                              size_t n2,
                              enum StMethod method,
                              double alpha,
                              struct StMannWhitney *out);

/**
 * Releases a tree handle; null is ignored.
 *
 * # Safety
 * `tree` must be null or a handle from this library not yet freed.
 */
void st_tree_free(struct StTree *tree);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void st_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *st_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SESSION_TREES_H */
