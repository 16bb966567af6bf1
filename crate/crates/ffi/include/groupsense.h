/* groupsense C API: consensus node state machine + link estimator. */

#ifndef GROUPSENSE_H
#define GROUPSENSE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GsStatus {
  GS_OK = 0,
  GS_NULL_POINTER = 1,
  GS_INVALID_ARGUMENT = 2,
  GS_LENGTH_MISMATCH = 3,
  GS_INTERNAL = 4,
} GsStatus;

/**
 * Opaque per-node protocol state.
 */
typedef struct GsNode GsNode;

/**
 * Smoothing and quantizer parameters, mirroring the library defaults.
 */
typedef struct GsEstimatorConfig {
  /**
   * Short window length in raw samples.
   */
  uint32_t short_window;
  /**
   * Long window length in short-average values.
   */
  uint32_t long_window;
  uint64_t short_period_ms;
  uint64_t long_period_ms;
  /**
   * Quantizer threshold for the within-20m level.
   */
  double th20;
  /**
   * Quantizer threshold for the within-30m level.
   */
  double th30;
  /**
   * Silence horizon after which a neighbor decays to level 0 (ms).
   */
  uint64_t silence_expiry_ms;
} GsEstimatorConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a node handle for `node_id` in a network of `n_nodes`, with
 * proximity levels in `[0, m]` and merges gated strictly above
 * `mate_threshold`. Pass NULL for `estimator` to use the defaults.
 * Returns NULL on invalid arguments.
 *
 * # Safety
 * `estimator` must be NULL or point to a valid [`GsEstimatorConfig`].
 */
struct GsNode *gs_node_new(uint32_t node_id,
                           uint32_t n_nodes,
                           uint8_t m,
                           uint8_t mate_threshold,
                           const struct GsEstimatorConfig *estimator);

/**
 * Release a handle. NULL is a no-op.
 *
 * # Safety
 * `node` must be NULL or a pointer from [`gs_node_new`] not yet freed.
 */
void gs_node_free(struct GsNode *node);

/**
 * Full receive path for a data packet: the signal reading is folded into
 * the link estimator, the sender's current quantized level gates the
 * merge, and the epoch rules run first (a newer epoch resets the vector,
 * an older one discards the packet).
 *
 * `vector` must point to `vector_len` bytes holding the sender's
 * proximity vector; `vector_len` must equal the network size.
 *
 * # Safety
 * `node` must be NULL or a live handle; `vector` must be NULL or point
 * to `vector_len` readable bytes.
 */
enum GsStatus gs_node_receive_data(struct GsNode *node,
                                   uint32_t sender,
                                   uint64_t epoch,
                                   uint8_t ed,
                                   uint64_t time_ms,
                                   const uint8_t *vector,
                                   size_t vector_len);

/**
 * Apply an epoch beacon: a strictly newer epoch resets the vector.
 *
 * # Safety
 * `node` must be NULL or a live handle.
 */
enum GsStatus gs_node_receive_beacon(struct GsNode *node, uint64_t epoch);

/**
 * Advance the estimator clock: recomputes averages and levels that are
 * due at `time_ms`. Call at least once per refresh period.
 *
 * # Safety
 * `node` must be NULL or a live handle.
 */
enum GsStatus gs_node_refresh(struct GsNode *node, uint64_t time_ms);

/**
 * Current local epoch, or 0 for NULL.
 *
 * # Safety
 * `node` must be NULL or a live handle.
 */
uint64_t gs_node_epoch(const struct GsNode *node);

/**
 * Current quantized proximity level for a neighbor, or -1 on NULL.
 *
 * # Safety
 * `node` must be NULL or a live handle.
 */
int32_t gs_node_proxim(const struct GsNode *node, uint32_t neighbor);

/**
 * Copy the node's proximity vector into `out` (capacity `cap` bytes).
 * Returns the number of entries written, or -1 on NULL / insufficient
 * capacity.
 *
 * # Safety
 * `node` must be NULL or a live handle; `out` must be NULL or point to
 * `cap` writable bytes.
 */
int32_t gs_node_vector(const struct GsNode *node, uint8_t *out, size_t cap);

/**
 * Copy the decoded mate set (node ids pinned at the top level, own id
 * included) into `out`. Returns the number of mates, or -1 on NULL /
 * insufficient capacity.
 *
 * # Safety
 * `node` must be NULL or a live handle; `out` must be NULL or point to
 * `cap` writable u32 slots.
 */
int32_t gs_node_mates(const struct GsNode *node, uint32_t *out, size_t cap);

/**
 * Expected-messages bound `N * Delta * (1 + ln N)`; NaN on invalid input.
 */
double gs_bound_expected_tau(uint64_t n, uint64_t delta);

/**
 * Confidence bound `N * Delta * (ln N + ln(Delta/eps))`; NaN on invalid
 * input (including epsilon outside (0, 1)).
 */
double gs_bound_tau_with_confidence(uint64_t n, uint64_t delta, double epsilon);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gs_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUPSENSE_H */
