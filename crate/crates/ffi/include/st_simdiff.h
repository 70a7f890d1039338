#ifndef ST_SIMDIFF_H
#define ST_SIMDIFF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the nonzero values equal the CLI exit codes.
enum StsStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  STS_STATUS_OK = 0,
  STS_STATUS_USAGE = 2,
  STS_STATUS_FORMAT = 3,
  STS_STATUS_VALIDATION = 4,
  STS_STATUS_IO = 5,
  STS_STATUS_INTERNAL = 6,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum StsStatus StsStatus;
#else
typedef int32_t StsStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum StsDiffMode
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  STS_DIFF_MODE_FIXED = 0,
  STS_DIFF_MODE_PERCENTILE = 1,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum StsDiffMode StsDiffMode;
#else
typedef uint32_t StsDiffMode;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

enum StsImportance
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  STS_IMPORTANCE_PROXY = 0,
  STS_IMPORTANCE_UNIFORM = 1,
  STS_IMPORTANCE_EXTERNAL = 2,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum StsImportance StsImportance;
#else
typedef uint32_t StsImportance;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Provenance codes returned by [`sts_selection_provenance`].
enum StsProvenance
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : uint8_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  STS_PROVENANCE_REPRESENTATIVE = 0,
  STS_PROVENANCE_EVENT = 1,
  STS_PROVENANCE_BOTH = 2,
  STS_PROVENANCE_FILL = 3,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum StsProvenance StsProvenance;
#else
typedef uint8_t StsProvenance;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Opaque selection handle.
typedef struct StsSelection StsSelection;

typedef struct StsConfig {
  double ratio;
  double tau_sim;
  // An `StsDiffMode` value.
  uint32_t diff_mode;
  // Used when `diff_mode` is fixed.
  double tau_diff;
  // Used when `diff_mode` is percentile.
  double percentile;
  // 0 selects ceil(sqrt(N)).
  size_t community_cap;
  // An `StsImportance` value.
  uint32_t importance;
  // NUL-terminated UTF-8 path; required for external importance.
  const char *importance_path;
  bool fill;
  // 0 uses all available cores.
  size_t threads;
} StsConfig;

typedef struct StsStats {
  size_t n;
  size_t n_target;
  size_t communities;
  size_t components;
  size_t rep_count;
  size_t event_count;
  size_t overlap_count;
  size_t candidate_count;
  size_t dropped_count;
  size_t fill_count;
  double tau_diff_resolved;
  double total_ms;
} StsStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Reference defaults: ratio 0.3, tau_sim 0.8, fixed tau_diff 0.2,
// automatic cap, proxy importance, fill on, all cores.
struct StsConfig sts_config_default(void);

// Selects tokens from a C-contiguous `frames x height x width x dim` f32
// array of `len` values. `config` may be null for defaults. On success
// `*out` receives a handle; otherwise it is set to null.
//
// # Safety
// `features` must point to `len` readable values and `out` must be writable.
StsStatus sts_select_f32(const float *features,
                         size_t len,
                         size_t frames,
                         size_t height,
                         size_t width,
                         size_t dim,
                         const struct StsConfig *config,
                         struct StsSelection **out);

// As [`sts_select_f32`] for f64 input; values are narrowed to f32.
//
// # Safety
// `features` must point to `len` readable values and `out` must be writable.
StsStatus sts_select_f64(const double *features,
                         size_t len,
                         size_t frames,
                         size_t height,
                         size_t width,
                         size_t dim,
                         const struct StsConfig *config,
                         struct StsSelection **out);

// Number of retained tokens; 0 for a null handle.
//
// # Safety
// `sel` must be null or a live handle.
size_t sts_selection_len(const struct StsSelection *sel);

// Ascending flat token indices, `sts_selection_len` entries, owned by the handle.
//
// # Safety
// `sel` must be null or a live handle.
const uint64_t *sts_selection_indices(const struct StsSelection *sel);

// Provenance codes parallel to the indices (see `StsProvenance`).
//
// # Safety
// `sel` must be null or a live handle.
const uint8_t *sts_selection_provenance(const struct StsSelection *sel);

// # Safety
// `sel` must be null or a live handle.
size_t sts_selection_n_target(const struct StsSelection *sel);

// # Safety
// `sel` must be null or a live handle; `out` must be writable.
StsStatus sts_selection_stats(const struct StsSelection *sel, struct StsStats *out);

// The result document written by `st-simdiff compress`, optionally without
// the `timing` section. Owned by the handle.
//
// # Safety
// `sel` must be null or a live handle.
const char *sts_selection_json(const struct StsSelection *sel, bool include_timing);

// # Safety
// `sel` must be null or a handle not yet freed.
void sts_selection_free(struct StsSelection *sel);

// Message for the most recent failure on this thread, or null. Valid until
// the next call into this library from the same thread.
const char *sts_last_error_message(void);

// Version and output schema, e.g. `0.1.0 (schema 1)`.
const char *sts_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ST_SIMDIFF_H */
