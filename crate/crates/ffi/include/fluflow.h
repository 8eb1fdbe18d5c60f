#ifndef FLUFLOW_H
#define FLUFLOW_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 1 to 3 match the command-line exit codes.
 */
typedef enum FfStatus {
  FF_STATUS_OK = 0,
  FF_STATUS_VALIDATION = 1,
  FF_STATUS_NUMERIC = 2,
  FF_STATUS_IO = 3,
  FF_STATUS_NULL_ARGUMENT = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  FF_STATUS_INTERNAL = 5,
} FfStatus;

typedef struct FfCompletion FfCompletion;

typedef struct FfConfig FfConfig;

typedef struct FfManifest FfManifest;

typedef struct FfPanel FfPanel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *fluflow_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fluflow_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void fluflow_string_free(char *s);

/**
 * Loads a `region,<indicator>...` CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FfStatus fluflow_panel_load(const char *path, struct FfPanel **out);

/**
 * # Safety
 * `panel` must be null or a live handle.
 */
void fluflow_panel_free(struct FfPanel *panel);

/**
 * # Safety
 * `panel` must be a live handle; `rows` and `cols` must be writable.
 */
enum FfStatus fluflow_panel_shape(const struct FfPanel *panel, size_t *rows, size_t *cols);

/**
 * Standardizes the panel and completes it by soft-impute. `max_rank` 0
 * means unbounded.
 *
 * # Safety
 * `panel` must be a live handle; `out` must be writable.
 */
enum FfStatus fluflow_complete(const struct FfPanel *panel,
                               size_t max_rank,
                               uint64_t seed,
                               struct FfCompletion **out);

/**
 * # Safety
 * `c` must be null or a live handle.
 */
void fluflow_completion_free(struct FfCompletion *c);

/**
 * # Safety
 * `c` must be a live handle; the out pointers must be writable.
 */
enum FfStatus fluflow_completion_summary(const struct FfCompletion *c,
                                         size_t *rank,
                                         double *train_rmse,
                                         size_t *iterations);

/**
 * Copies the completed matrix into `buf` (row-major). `len` must equal
 * rows × cols of the panel.
 *
 * # Safety
 * `buf` must hold `len` writable doubles.
 */
enum FfStatus fluflow_completion_copy(const struct FfCompletion *c, double *buf, size_t len);

/**
 * Dominant period of a series after mean removal, searching bins
 * `min_k..=len/2`.
 *
 * # Safety
 * `values` must hold `len` doubles; out pointers must be writable.
 */
enum FfStatus fluflow_dominant_period(const double *values,
                                      size_t len,
                                      size_t min_k,
                                      double *period,
                                      size_t *peak_k,
                                      double *peak_ratio);

/**
 * Flow design matrix (n × 8, row-major) for scores `z` and normalized
 * flow matrices `m`, `t` (row-major n × n, entry (i, j) is the flow from j
 * into i).
 *
 * # Safety
 * `z` must hold `n` doubles, `m` and `t` n² doubles and `out` 8n writable doubles.
 */
enum FfStatus fluflow_flow_design(size_t n,
                                  const double *z,
                                  const double *m,
                                  const double *t,
                                  double *out);

/**
 * Parses a pipeline configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum FfStatus fluflow_config_load(const char *path, struct FfConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum FfStatus fluflow_config_set_seed(struct FfConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live handle and `dir` a NUL-terminated string.
 */
enum FfStatus fluflow_config_set_out_dir(struct FfConfig *cfg, const char *dir);

/**
 * # Safety
 * `cfg` must be null or a live handle.
 */
void fluflow_config_free(struct FfConfig *cfg);

/**
 * Runs every pipeline stage and returns the manifest.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum FfStatus fluflow_run_pipeline(const struct FfConfig *cfg, struct FfManifest **out);

/**
 * Reads `manifest.txt` from an output directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum FfStatus fluflow_manifest_load(const char *dir, struct FfManifest **out);

/**
 * # Safety
 * `m` must be null or a live handle.
 */
void fluflow_manifest_free(struct FfManifest *m);

/**
 * Number of manifest entries; 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t fluflow_manifest_len(const struct FfManifest *m);

/**
 * Entry `index` as a `stage file sha256 status` line; free with
 * [`fluflow_string_free`]. Null when out of range.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
char *fluflow_manifest_entry(const struct FfManifest *m, size_t index);

/**
 * Human-readable report; free with [`fluflow_string_free`]. Null for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
char *fluflow_report(const struct FfManifest *m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUFLOW_H */
