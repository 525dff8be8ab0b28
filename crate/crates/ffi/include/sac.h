#ifndef SAC_FFI_H
#define SAC_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum SacStatus {
  SAC_STATUS_OK = 0,
  SAC_STATUS_NULL_POINTER = 1,
  SAC_STATUS_INVALID_UTF8 = 2,
  SAC_STATUS_INVALID_CONFIG = 3,
  SAC_STATUS_DOMAIN = 4,
  SAC_STATUS_NUMERICAL = 5,
  SAC_STATUS_IO = 6,
  /**
   * A study ran but at least one of its checks failed.
   */
  SAC_STATUS_CHECK_FAILED = 7,
  SAC_STATUS_BUFFER_TOO_SMALL = 8,
  SAC_STATUS_PANIC = 9,
} SacStatus;

/**
 * Opaque run configuration.
 */
typedef struct SacConfig SacConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty after a success. The
 * pointer stays valid until the next call into the library on this thread.
 */
const char *sac_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sac_version(void);

/**
 * Parses and validates a JSON configuration. Omitted fields take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SacStatus sac_config_from_json(const char *json, struct SacConfig **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `cfg` must come from [`sac_config_from_json`] and not be used afterwards.
 */
void sac_config_free(struct SacConfig *cfg);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum SacStatus sac_config_set_seed(struct SacConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live handle and `dir` a NUL-terminated string.
 */
enum SacStatus sac_config_set_output_dir(struct SacConfig *cfg, const char *dir);

/**
 * Number of grid cells, i.e. the length of a field.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum SacStatus sac_config_field_len(const struct SacConfig *cfg, size_t *out);

/**
 * Writes the 64-character hex configuration hash plus NUL into `buf`.
 *
 * # Safety
 * `cfg` must be a live handle and `buf` valid for `len` bytes.
 */
enum SacStatus sac_config_hash(const struct SacConfig *cfg, char *buf, size_t len);

/**
 * Resolvent `J_lambda(x)`, the unique `r` in `(-1, 1)` with `r + lambda beta(r) = x`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SacStatus sac_resolvent(double lambda, double x, double *out);

/**
 * Yosida approximation `beta_lambda(x)`, its derivative and the Moreau
 * envelope `hat beta_lambda(x)`.
 *
 * # Safety
 * The three output pointers must be valid.
 */
enum SacStatus sac_yosida(double lambda, double x, double *beta, double *dbeta, double *envelope);

/**
 * Runs a study (`simulate`, `uniform`, `cauchy`, `dependence`, `strong`,
 * `derivative`, `oracles`) and writes its reports to the output directory.
 * Returns `SAC_STATUS_CHECK_FAILED` when the study ran but a check failed.
 * `threads = 0` uses the default pool size.
 *
 * # Safety
 * `cfg` must be a live handle and `command` a NUL-terminated string.
 */
enum SacStatus sac_run(const struct SacConfig *cfg, const char *command, uint32_t threads);

/**
 * Simulates one replicate at regularization level `lambda` and copies the
 * final field into `out`. `written` receives the field length; when `len` is
 * too small nothing is copied and `SAC_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `cfg` must be a live handle, `out` valid for `len` doubles, `written` valid.
 */
enum SacStatus sac_simulate_final(const struct SacConfig *cfg,
                                  uint64_t replicate,
                                  double lambda,
                                  double *out,
                                  size_t len,
                                  size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SAC_FFI_H */
