#ifndef FUSECONV_H
#define FUSECONV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdint.h>
#include <stddef.h>

#define FC_VARIANT_FULL 0

#define FC_VARIANT_HALF 1

#define FC_VARIANT_FULL50 2

#define FC_VARIANT_HALF50 3

#define FC_MODE_ANALYTICAL 0

#define FC_MODE_SIMULATE 1

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_UTF8 = 2,
  FC_STATUS_INVALID_ARGUMENT = 3,
  FC_STATUS_NOT_FOUND = 4,
  FC_STATUS_PARSE = 5,
  FC_STATUS_TRANSFORM = 6,
  FC_STATUS_ESTIMATE = 7,
  FC_STATUS_PANIC = 8,
} FcStatus;

/**
 * Opaque network handle.
 */
typedef struct FcNetwork FcNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *fc_last_error(void);

/**
 * Creates a handle for a builtin network such as `mobilenet-v2`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FcStatus fc_network_builtin(const char *name, struct FcNetwork **out);

/**
 * Loads a network description file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FcStatus fc_network_load(const char *path, struct FcNetwork **out);

/**
 * Creates a transformed copy of `net`; `variant` is one of the
 * `FC_VARIANT_*` constants. Partial variants rank layers on a 64x64 array.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum FcStatus fc_network_transform(const struct FcNetwork *net,
                                   uint32_t variant,
                                   struct FcNetwork **out);

/**
 * Number of layers in `net`.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum FcStatus fc_network_layer_count(const struct FcNetwork *net, size_t *out);

/**
 * Multiply-accumulate count of the whole network.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum FcStatus fc_network_macs(const struct FcNetwork *net, uint64_t *out);

/**
 * Stored weights of the whole network.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum FcStatus fc_network_params(const struct FcNetwork *net, uint64_t *out);

/**
 * Total latency in cycles on a `rows x cols` array with broadcast links
 * and serialized folds. `mode` is one of the `FC_MODE_*` constants; `seed`
 * only affects operand values in simulate mode.
 *
 * # Safety
 * `net` must be a live handle and `out_cycles` a valid pointer.
 */
enum FcStatus fc_estimate_cycles(const struct FcNetwork *net,
                                 uint32_t rows,
                                 uint32_t cols,
                                 uint32_t mode,
                                 uint64_t seed,
                                 uint64_t *out_cycles);

/**
 * Classifies a recurrence system given as text; writes 1 for RIA, 0 otherwise.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out_is_ria` a valid pointer.
 */
enum FcStatus fc_ria_check(const char *text, int32_t *out_is_ria);

/**
 * Classifies a builtin system (`matmul`, `conv1d`, `conv2d_direct`,
 * `conv2d_im2col`); writes 1 for RIA, 0 otherwise.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out_is_ria` a valid pointer.
 */
enum FcStatus fc_ria_check_builtin(const char *name, int32_t *out_is_ria);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void fc_network_free(struct FcNetwork *net);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUSECONV_H */
