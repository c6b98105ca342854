#ifndef DASHLAB_H
#define DASHLAB_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DlStatus {
  DL_STATUS_OK = 0,
  DL_STATUS_NULL_POINTER = 1,
  DL_STATUS_INVALID_ARGUMENT = 2,
  DL_STATUS_IO = 3,
  DL_STATUS_PARSE = 4,
  DL_STATUS_BUFFER_TOO_SMALL = 5,
  DL_STATUS_PANIC = 6,
} DlStatus;

/**
 * Attribution method selector.
 */
typedef enum DlMethod {
  DL_METHOD_SHAP = 0,
  DL_METHOD_PERMUTATION = 1,
  DL_METHOD_SPLIT_COUNT = 2,
} DlMethod;

typedef enum DlVerdict {
  DL_VERDICT_STABLE = 0,
  DL_VERDICT_UNSTABLE = 1,
  DL_VERDICT_DEGENERATE = 2,
} DlVerdict;

/**
 * Consensus aggregator selector; `trim` is only read for `Trimmed`.
 */
typedef enum DlAggregator {
  DL_AGGREGATOR_MEAN = 0,
  DL_AGGREGATOR_TRIMMED = 1,
  DL_AGGREGATOR_MEDIAN = 2,
} DlAggregator;

/**
 * Models × features attribution matrix.
 */
typedef struct DlAttribution DlAttribution;

/**
 * Synthetic or loaded data set.
 */
typedef struct DlDataset DlDataset;

/**
 * Fitted boosted ensemble.
 */
typedef struct DlEnsemble DlEnsemble;

/**
 * Training hyperparameters. Obtain defaults from [`dl_train_config_default`].
 */
typedef struct DlTrainConfig {
  size_t rounds;
  size_t max_depth;
  double learning_rate;
  double subsample;
  double colsample;
  size_t min_leaf;
  uint64_t seed;
} DlTrainConfig;

/**
 * Single-model split-frequency screen for one feature pair.
 */
typedef struct DlScreenResult {
  double p_hat_j;
  double p_hat_k;
  double t_eff;
  double z_split;
  bool flagged;
} DlScreenResult;

/**
 * Multi-model Z-test for one feature pair. `z` and `snr` are `INFINITY`
 * when the differences are constant and nonzero.
 */
typedef struct DlPairDiagnostic {
  double mean_gap;
  double noise_sd;
  double z;
  double snr;
  double flip_empirical;
  double flip_predicted;
  enum DlVerdict verdict;
} DlPairDiagnostic;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *dl_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dl_version(void);

struct DlTrainConfig dl_train_config_default(void);

/**
 * Samples `group_count` groups of `group_size` equicorrelated features plus
 * `extras` independent ones, with unit coefficients on group features.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum DlStatus dl_dataset_generate(size_t group_count,
                                  size_t group_size,
                                  double rho,
                                  size_t extras,
                                  size_t n_samples,
                                  uint64_t seed,
                                  struct DlDataset **out);

/**
 * Loads a CSV with a header row; `target` names the response column.
 *
 * # Safety
 * `path` and `target` must be NUL-terminated strings; `out` must be writable.
 */
enum DlStatus dl_dataset_load_csv(const char *path, const char *target, struct DlDataset **out);

/**
 * Number of rows, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t dl_dataset_n_samples(const struct DlDataset *ds);

/**
 * Number of feature columns, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t dl_dataset_n_features(const struct DlDataset *ds);

/**
 * # Safety
 * `ds` must be NULL or a handle not yet freed.
 */
void dl_dataset_free(struct DlDataset *ds);

/**
 * Fits one ensemble.
 *
 * # Safety
 * `ds` and `config` must be valid; `out` must be writable.
 */
enum DlStatus dl_ensemble_fit(const struct DlDataset *ds,
                              const struct DlTrainConfig *config,
                              struct DlEnsemble **out);

/**
 * Predicts one row of `len` features into `*out`.
 *
 * # Safety
 * `x` must point to `len` doubles; `out` must be writable.
 */
enum DlStatus dl_ensemble_predict(const struct DlEnsemble *e,
                                  const double *x,
                                  size_t len,
                                  double *out);

/**
 * Serialises the ensemble as JSON into a new string released with
 * [`dl_string_free`].
 *
 * # Safety
 * `e` must be valid; `out` must be writable.
 */
enum DlStatus dl_ensemble_to_json(const struct DlEnsemble *e, char **out);

/**
 * Split-frequency screen of features `j` and `k`.
 *
 * # Safety
 * `e` must be valid; `out` must be writable.
 */
enum DlStatus dl_ensemble_screen(const struct DlEnsemble *e,
                                 size_t j,
                                 size_t k,
                                 struct DlScreenResult *out);

/**
 * # Safety
 * `e` must be NULL or a handle not yet freed.
 */
void dl_ensemble_free(struct DlEnsemble *e);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void dl_string_free(char *s);

/**
 * Trains `models` ensembles with seeds `seed_base..seed_base+models` and
 * stacks their global attributions.
 *
 * # Safety
 * `ds` and `config` must be valid; `out` must be writable.
 */
enum DlStatus dl_attribution_matrix(const struct DlDataset *ds,
                                    const struct DlTrainConfig *config,
                                    enum DlMethod method,
                                    size_t models,
                                    uint64_t seed_base,
                                    struct DlAttribution **out);

/**
 * Builds a matrix from `rows × cols` row-major values.
 *
 * # Safety
 * `values` must point to `rows * cols` doubles; `out` must be writable.
 */
enum DlStatus dl_attribution_from_values(const double *values,
                                         size_t rows,
                                         size_t cols,
                                         struct DlAttribution **out);

/**
 * Writes the number of models and features.
 *
 * # Safety
 * All pointers must be valid.
 */
enum DlStatus dl_attribution_shape(const struct DlAttribution *a, size_t *rows, size_t *cols);

/**
 * Copies the matrix row-major into `buf`, which must hold `rows * cols`
 * doubles (`BufferTooSmall` otherwise).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum DlStatus dl_attribution_values(const struct DlAttribution *a, double *buf, size_t len);

/**
 * Z-test for the pair `(j, k)`; needs at least two models.
 *
 * # Safety
 * `a` must be valid; `out` must be writable.
 */
enum DlStatus dl_z_test(const struct DlAttribution *a,
                        size_t j,
                        size_t k,
                        struct DlPairDiagnostic *out);

/**
 * Per-feature consensus into `buf` (length ≥ number of features).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum DlStatus dl_consensus(const struct DlAttribution *a,
                           enum DlAggregator method,
                           double trim,
                           double *buf,
                           size_t len);

/**
 * # Safety
 * `a` must be NULL or a handle not yet freed.
 */
void dl_attribution_free(struct DlAttribution *a);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DASHLAB_H */
