/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef CRPSMIX_H
#define CRPSMIX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CrpsmixRule {
  CRPSMIX_RULE_AA = 0,
  CRPSMIX_RULE_WA = 1,
} CrpsmixRule;

typedef enum CrpsmixStatus {
  CRPSMIX_STATUS_OK = 0,
  CRPSMIX_STATUS_NULL_POINTER = 1,
  CRPSMIX_STATUS_INVALID_DOMAIN = 2,
  CRPSMIX_STATUS_INVALID_DISTRIBUTION = 3,
  CRPSMIX_STATUS_INVALID_CDF = 4,
  CRPSMIX_STATUS_OUTCOME_OUT_OF_RANGE = 5,
  CRPSMIX_STATUS_EXPERT_COUNT_MISMATCH = 6,
  CRPSMIX_STATUS_INVALID_CONFIDENCE = 7,
  CRPSMIX_STATUS_INVALID_CONFIG = 8,
  CRPSMIX_STATUS_ALL_EXPERTS_ASLEEP = 9,
  // `observe` without a pending `predict`, or `predict` twice.
  CRPSMIX_STATUS_OUT_OF_ORDER = 10,
  CRPSMIX_STATUS_BUFFER_TOO_SMALL = 11,
  CRPSMIX_STATUS_INVALID_ARGUMENT = 12,
  CRPSMIX_STATUS_PANIC = 99,
} CrpsmixStatus;

// Opaque aggregator handle.
typedef struct CrpsmixAggregator CrpsmixAggregator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread (empty if none).
// The pointer stays valid until the next failing call on the same thread.
const char *crpsmix_last_error(void);

// `ln(experts) / eta`.
double crpsmix_theoretical_bound(size_t experts, double eta);

// Learning rate of `rule` on `[a, b]`; NaN when `b <= a`.
double crpsmix_learning_rate(enum CrpsmixRule rule, double a, double b);

// CRPS of a grid CDF (`cells` values) against outcome `y`.
//
// # Safety
// `cdf` must point to `cells` readable doubles and `out` to one writable double.
enum CrpsmixStatus crpsmix_crps(double a,
                                double b,
                                size_t cells,
                                const double *cdf,
                                double y,
                                double *out);

// Discretize a parametric distribution onto the grid.
//
// `kind` is one of `point`, `uniform`, `triangular`, `gmm`; `params` follow
// the CSV layout (`gmm` takes weight, mean, std triples).
//
// # Safety
// `kind` must be a NUL-terminated string, `params` must point to
// `n_params` doubles and `out` to `cells` writable doubles.
enum CrpsmixStatus crpsmix_discretize(const char *kind,
                                      const double *params,
                                      size_t n_params,
                                      double a,
                                      double b,
                                      size_t cells,
                                      double *out);

// Create an aggregator. `alpha = 0` disables Fixed Share.
//
// # Safety
// `out` must point to a writable handle slot. Release the handle with
// [`crpsmix_aggregator_free`].
enum CrpsmixStatus crpsmix_aggregator_new(enum CrpsmixRule rule,
                                          double a,
                                          double b,
                                          size_t cells,
                                          size_t experts,
                                          double alpha,
                                          bool confidence,
                                          struct CrpsmixAggregator **out);

// Release a handle. Null is ignored.
//
// # Safety
// `handle` must come from [`crpsmix_aggregator_new`] and not be used afterwards.
void crpsmix_aggregator_free(struct CrpsmixAggregator *handle);

// Learner CDF for the current round from `experts * cells` expert values.
// `confidences` may be null (every expert fully confident).
//
// # Safety
// Pointers must reference arrays of the stated sizes; `out_cdf` holds `cells` doubles.
enum CrpsmixStatus crpsmix_aggregator_predict(struct CrpsmixAggregator *handle,
                                              const double *expert_cdfs,
                                              const double *confidences,
                                              double *out_cdf);

// Reveal the outcome for the pending round. `out_learner_loss` may be null.
//
// # Safety
// `handle` must be live; `out_learner_loss` is null or writable.
enum CrpsmixStatus crpsmix_aggregator_observe(struct CrpsmixAggregator *handle,
                                              double y,
                                              double *out_learner_loss);

// Current normalized weights (before confidence scaling); `len >= experts`.
//
// # Safety
// `out` must hold `len` writable doubles.
enum CrpsmixStatus crpsmix_aggregator_weights(struct CrpsmixAggregator *handle,
                                              double *out,
                                              size_t len);

// Number of completed rounds; 0 for a null handle.
//
// # Safety
// `handle` must be null or live.
uint64_t crpsmix_aggregator_rounds(const struct CrpsmixAggregator *handle);

// Confidence-discounted regret to each expert over the completed rounds.
//
// # Safety
// `out` must hold `len` writable doubles.
enum CrpsmixStatus crpsmix_aggregator_discounted_regret(struct CrpsmixAggregator *handle,
                                                        double *out,
                                                        size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRPSMIX_H */
