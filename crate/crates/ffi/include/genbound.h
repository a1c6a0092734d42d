#ifndef GENBOUND_H
#define GENBOUND_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum GbStatus {
  GB_STATUS_OK = 0,
  GB_STATUS_NULL_POINTER = 1,
  GB_STATUS_INVALID_ARGUMENT = 2,
  GB_STATUS_INVALID_DISTRIBUTION = 3,
  GB_STATUS_SHAPE_MISMATCH = 4,
  GB_STATUS_INFEASIBLE = 5,
  GB_STATUS_NEGATIVE_RADICAND = 6,
  GB_STATUS_ENUMERATION_CAP = 7,
  GB_STATUS_CONFIG = 8,
  GB_STATUS_IO = 9,
  GB_STATUS_INTERNAL = 10,
  GB_STATUS_VALIDATION_FAILED = 11,
} GbStatus;

/**
 * Opaque bound report.
 */
typedef struct GbBoundReport GbBoundReport;

/**
 * Opaque probability vector.
 */
typedef struct GbPmf GbPmf;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *gb_last_error(void);

/**
 * Library version as a static string.
 */
const char *gb_version(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void gb_string_free(char *s);

/**
 * Creates a pmf from `len` probabilities (must sum to 1 within 1e-9).
 *
 * # Safety
 * `probs` must point to `len` doubles; `out` must be writable.
 */
enum GbStatus gb_pmf_new(const double *probs, size_t len, struct GbPmf **out_pmf);

/**
 * # Safety
 * `pmf` must come from [`gb_pmf_new`] and not have been freed. Null is ignored.
 */
void gb_pmf_free(struct GbPmf *pmf);

/**
 * # Safety
 * `pmf` must be a live handle.
 */
size_t gb_pmf_len(const struct GbPmf *pmf);

/**
 * Shannon entropy in nats.
 *
 * # Safety
 * `pmf` must be a live handle; `out` must be writable.
 */
enum GbStatus gb_entropy(const struct GbPmf *pmf, double *out_value);

/**
 * `KL(p || q)` in nats; may be `+inf`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum GbStatus gb_kl_divergence(const struct GbPmf *p, const struct GbPmf *q, double *out_value);

/**
 * Rényi divergence of order `alpha` in nats.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum GbStatus gb_renyi_divergence(const struct GbPmf *p,
                                  const struct GbPmf *q,
                                  double alpha,
                                  double *out_value);

/**
 * Largest `p` with `kl(p || a) <= b`.
 *
 * # Safety
 * `out` must be writable.
 */
enum GbStatus gb_binary_kl_inverse(double a, double b, double *out_value);

/**
 * `R(epsilon)` in nats for a source and a row-major `rows x cols`
 * distortion matrix (`rows` equal to the source size).
 *
 * # Safety
 * `source` must be live, `distortion` must point to `rows * cols` doubles and
 * `out` must be writable.
 */
enum GbStatus gb_rate_distortion(const struct GbPmf *source,
                                 const double *distortion,
                                 size_t rows,
                                 size_t cols,
                                 double epsilon,
                                 double *out_rate);

/**
 * Variable-size compressibility bound.
 *
 * # Safety
 * `out` must be writable; the new report is owned by the caller.
 */
enum GbStatus gb_variable_size_bound(double rate,
                                     double sigma,
                                     size_t n,
                                     double delta,
                                     double epsilon,
                                     struct GbBoundReport **out_report);

/**
 * Fixed-size compressibility bound.
 *
 * # Safety
 * `out` must be writable; the new report is owned by the caller.
 */
enum GbStatus gb_fixed_size_bound(double rate,
                                  double sigma,
                                  size_t n,
                                  double delta,
                                  double epsilon,
                                  struct GbBoundReport **out_report);

/**
 * Fast-rate bound from the binary-KL inversion.
 *
 * # Safety
 * `out` must be writable; the new report is owned by the caller.
 */
enum GbStatus gb_fast_rate_bound(double emp_risk,
                                 double sup_mi,
                                 double sigma,
                                 size_t n,
                                 double delta,
                                 struct GbBoundReport **out_report);

/**
 * # Safety
 * `report` must be live; `out` must be writable.
 */
enum GbStatus gb_bound_report_value(const struct GbBoundReport *report, double *out_value);

/**
 * Canonical JSON of a report; free with [`gb_string_free`].
 *
 * # Safety
 * `report` must be live; `out` must be writable.
 */
enum GbStatus gb_bound_report_json(const struct GbBoundReport *report, char **out_json);

/**
 * # Safety
 * `report` must come from this library and not have been freed. Null is
 * ignored.
 */
void gb_bound_report_free(struct GbBoundReport *report);

/**
 * Runs a JSON run config (same format as the command-line `--config` file)
 * and returns the manifest JSON. A run whose validation fails returns
 * `ValidationFailed` and still sets `out`.
 *
 * # Safety
 * `config_json` must be a nul-terminated string; `out` must be writable.
 */
enum GbStatus gb_run_config(const char *config_json, char **out_manifest);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENBOUND_H */
