#ifndef TRADEOFF_FORGE_H
#define TRADEOFF_FORGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define TF_OK 0

#define TF_NULL_POINTER 1

#define TF_VALIDATION 2

#define TF_INFEASIBLE 3

#define TF_NUMERICAL 4

#define TF_MULTICHAIN 5

#define TF_OUT_OF_RANGE 6

#define TF_PANIC 7

/**
 * Opaque tradeoff curve together with the model it was built for.
 */
typedef struct TfCurve TfCurve;

/**
 * Opaque model parameters.
 */
typedef struct TfModel TfModel;

/**
 * Answer to a power-budget query.
 */
typedef struct TfQuery {
  double delay;
  /**
   * Power spent by the returned policy.
   */
  double power;
  /**
   * Mixing threshold index, or -1 for a deterministic vertex policy.
   */
  int64_t s_star;
  /**
   * Probability of sending `s_star` at state `t(s_star)`.
   */
  double mix_prob;
} TfQuery;

typedef struct TfSimResult {
  double power_mean;
  double delay_mean;
  double power_se;
  double delay_se;
  uint64_t slots_used;
} TfSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *tf_last_error(void);

/**
 * Creates a model from explicit parameters; `power` has `max_tx + 1` entries.
 *
 * # Safety
 * `power` must point to `power_len` doubles; `out` must be writable.
 */
int32_t tf_model_new(double alpha,
                     size_t batch,
                     size_t max_tx,
                     size_t buffer,
                     const double *power,
                     size_t power_len,
                     struct TfModel **out);

/**
 * Creates a built-in model ("fig4" or "fig5"); a NaN `alpha` keeps the preset's value.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be writable.
 */
int32_t tf_model_preset(const char *name, double alpha, struct TfModel **out);

/**
 * # Safety
 * `model` must come from a `tf_model_*` constructor and not be freed twice.
 */
void tf_model_free(struct TfModel *model);

/**
 * Average power and delay of a deterministic threshold policy (`max_tx + 1` thresholds).
 *
 * # Safety
 * Pointers must be valid for the given lengths; outputs must be writable.
 */
int32_t tf_evaluate_thresholds(const struct TfModel *model,
                               const size_t *thresholds,
                               size_t len,
                               double *power_out,
                               double *delay_out);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
int32_t tf_curve_build(const struct TfModel *model, struct TfCurve **out);

/**
 * # Safety
 * `curve` must come from `tf_curve_build` and not be freed twice.
 */
void tf_curve_free(struct TfCurve *curve);

/**
 * Number of vertices, or 0 for a null handle.
 *
 * # Safety
 * `curve` must be null or a live handle.
 */
size_t tf_curve_len(const struct TfCurve *curve);

/**
 * Vertex `index`, ordered from the highest power (lowest delay).
 *
 * # Safety
 * `curve` must be a live handle; outputs must be writable.
 */
int32_t tf_curve_vertex(const struct TfCurve *curve,
                        size_t index,
                        double *power_out,
                        double *delay_out);

/**
 * Minimum delay under `budget`.
 *
 * # Safety
 * `curve` must be a live handle; `out` must be writable.
 */
int32_t tf_curve_min_delay(const struct TfCurve *curve, double budget, struct TfQuery *out);

/**
 * Serializes the curve as JSON; release the string with `tf_string_free`.
 *
 * # Safety
 * `curve` must be a live handle; `out` must be writable.
 */
int32_t tf_curve_to_json(const struct TfCurve *curve, char **out);

/**
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void tf_string_free(char *s);

/**
 * Minimum delay under `budget` from the linear program.
 *
 * # Safety
 * `model` must be a live handle; `delay_out` must be writable.
 */
int32_t tf_lp_min_delay(const struct TfModel *model, double budget, double *delay_out);

/**
 * Simulates a threshold policy; `mix_s_star < 0` means deterministic.
 *
 * # Safety
 * `thresholds` must point to `len` values; `out` must be writable.
 */
int32_t tf_simulate_thresholds(const struct TfModel *model,
                               const size_t *thresholds,
                               size_t len,
                               int64_t mix_s_star,
                               double mix_prob,
                               uint64_t seed,
                               uint64_t slots,
                               uint64_t warmup,
                               struct TfSimResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRADEOFF_FORGE_H */
