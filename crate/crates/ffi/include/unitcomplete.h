#ifndef UNITCOMPLETE_H
#define UNITCOMPLETE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UcGauge {
  UC_GAUGE_SYMMETRIC = 0,
  UC_GAUGE_FIRST_ROW_ANCHORED = 1,
} UcGauge;

/**
 * Result code of every exported function.
 */
typedef enum UcStatus {
  UC_STATUS_OK = 0,
  UC_STATUS_NULL_POINTER = 1,
  UC_STATUS_PARSE_ERROR = 2,
  UC_STATUS_INVALID_ARGUMENT = 3,
  UC_STATUS_NOT_CONVERGED = 4,
  UC_STATUS_DIVERGED = 5,
  UC_STATUS_DEGENERATE = 6,
  UC_STATUS_INFEASIBLE_MASK = 7,
  UC_STATUS_OUT_OF_RANGE = 8,
  UC_STATUS_DIMENSION_MISMATCH = 9,
  UC_STATUS_PANIC = 10,
} UcStatus;

typedef enum UcPolicy {
  UC_POLICY_REFUSE = 0,
  UC_POLICY_ESTIMATE_WITH_WARNING = 1,
} UcPolicy;

typedef enum UcPredictionStatus {
  UC_PREDICTION_STATUS_OBSERVED = 0,
  UC_PREDICTION_STATUS_ESTIMATED = 1,
  UC_PREDICTION_STATUS_CROSS_COMPONENT = 2,
  UC_PREDICTION_STATUS_UNDEFINED_ROW = 3,
  UC_PREDICTION_STATUS_UNDEFINED_COL = 4,
} UcPredictionStatus;

/**
 * A sparse rating matrix.
 */
typedef struct UcMatrix UcMatrix;

/**
 * A completion model built from a unit-product scaling.
 */
typedef struct UcModel UcModel;

/**
 * Stopping rule and gauge for the balancing iteration.
 */
typedef struct UcBalanceConfig {
  double tol;
  size_t max_iters;
  enum UcGauge gauge;
} UcBalanceConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default configuration: tolerance 1e-10, 1000 sweeps, symmetric gauge.
 */
struct UcBalanceConfig uc_balance_config_default(void);

/**
 * Message for the last failed call on this thread, or null after a
 * successful one. Valid until the next call into this library.
 */
const char *uc_last_error_message(void);

/**
 * Parses `row_id,col_id,value` text (comma or tab separated, detected
 * automatically). A nonzero `has_header` skips the first record.
 *
 * # Safety
 * `text` must be a NUL-terminated UTF-8 string and `out` a valid pointer.
 */
enum UcStatus uc_matrix_from_csv(const char *text, int has_header, struct UcMatrix **out);

/**
 * Builds an `n_rows × n_cols` matrix from `len` zero-based triplets.
 *
 * # Safety
 * `rows`, `cols` and `values` must each point to `len` elements; `out`
 * must be a valid pointer.
 */
enum UcStatus uc_matrix_from_triplets(size_t n_rows,
                                      size_t n_cols,
                                      size_t len,
                                      const size_t *rows,
                                      const size_t *cols,
                                      const double *values,
                                      struct UcMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void uc_matrix_free(struct UcMatrix *m);

/**
 * # Safety
 * `m` must be a live handle; each output pointer may be null.
 */
enum UcStatus uc_matrix_dims(const struct UcMatrix *m, size_t *n_rows, size_t *n_cols, size_t *nnz);

/**
 * Balances `m` to unit products and builds a completion model. A null
 * `cfg` uses the defaults.
 *
 * # Safety
 * `m` must be a live handle, `cfg` null or valid, `out` a valid pointer.
 */
enum UcStatus uc_model_build(const struct UcMatrix *m,
                             const struct UcBalanceConfig *cfg,
                             enum UcPolicy policy,
                             struct UcModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void uc_model_free(struct UcModel *model);

/**
 * Sweeps used and final residual of the scaling behind `model`.
 *
 * # Safety
 * `model` must be a live handle; each output pointer may be null.
 */
enum UcStatus uc_model_stats(const struct UcModel *model,
                             size_t *iterations,
                             double *residual,
                             size_t *n_components);

/**
 * Copies the row factors into `out` (`len ≥ n_rows`).
 *
 * # Safety
 * `model` must be a live handle and `out` point to `len` doubles.
 */
enum UcStatus uc_model_row_factors(const struct UcModel *model, double *out, size_t len);

/**
 * Copies the column factors into `out` (`len ≥ n_cols`).
 *
 * # Safety
 * `model` must be a live handle and `out` point to `len` doubles.
 */
enum UcStatus uc_model_col_factors(const struct UcModel *model, double *out, size_t len);

/**
 * Predicted value of cell `(row, col)`; NaN when the status carries no value.
 *
 * # Safety
 * `model` must be a live handle; `value` and `status` must be valid.
 */
enum UcStatus uc_model_predict(const struct UcModel *model,
                               size_t row,
                               size_t col,
                               double *value,
                               enum UcPredictionStatus *status);

/**
 * Unit-sum (Sinkhorn) factors of `m`, written to `row_out` and `col_out`.
 *
 * # Safety
 * `m` must be a live handle, `cfg` null or valid, and the output buffers
 * must hold `row_len` and `col_len` doubles.
 */
enum UcStatus uc_sinkhorn_factors(const struct UcMatrix *m,
                                  const struct UcBalanceConfig *cfg,
                                  double *row_out,
                                  size_t row_len,
                                  double *col_out,
                                  size_t col_len);

/**
 * Holds out a seeded random `fraction` of the positive cells, rebalances
 * and reports RMSE and MAE over the estimable held-out cells (NaN when
 * none is estimable).
 *
 * # Safety
 * `m` must be a live handle, `cfg` null or valid; `rmse` and `mae` may be null.
 */
enum UcStatus uc_evaluate(const struct UcMatrix *m,
                          const struct UcBalanceConfig *cfg,
                          enum UcPolicy policy,
                          double fraction,
                          uint64_t seed,
                          double *rmse,
                          double *mae);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNITCOMPLETE_H */
