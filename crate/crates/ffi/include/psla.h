#ifndef PSLA_H
#define PSLA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PslaStatus {
  PSLA_STATUS_OK = 0,
  PSLA_STATUS_NULL_POINTER = 1,
  PSLA_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The metric is undefined for the input, e.g. a class without positives.
   */
  PSLA_STATUS_UNDEFINED = 3,
  PSLA_STATUS_IO = 4,
  PSLA_STATUS_CONFIG = 5,
  PSLA_STATUS_NUMERICAL = 6,
  PSLA_STATUS_PANIC = 7,
  PSLA_STATUS_FAILED = 8,
} PslaStatus;

/**
 * An in-memory multi-label corpus.
 */
typedef struct PslaCorpus PslaCorpus;

/**
 * Metrics for one prediction matrix.
 */
typedef struct PslaReport PslaReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (always
 * nul-terminated when `len > 0`) and returns the full message length, or 0
 * when there is none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t psla_last_error_message(char *buf, size_t len);

/**
 * Library version as a static nul-terminated string.
 */
const char *psla_version(void);

/**
 * Non-interpolated average precision of one class.
 *
 * # Safety
 * `scores` and `labels` must point to `n` values; `out` must be writable.
 */
enum PslaStatus psla_average_precision(const double *scores,
                                       const uint8_t *labels,
                                       size_t n,
                                       double *out);

/**
 * Area under the ROC curve of one class.
 *
 * # Safety
 * As for [`psla_average_precision`].
 */
enum PslaStatus psla_roc_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * Sensitivity index for an AUC in (0, 1).
 *
 * # Safety
 * `out` must be writable.
 */
enum PslaStatus psla_d_prime(double auc, double *out);

/**
 * Evaluates a row-major `rows x cols` prediction matrix against 0/1 labels
 * of the same layout.
 *
 * # Safety
 * `predictions` and `labels` must hold `rows * cols` values; `out` must be
 * writable. The returned report is released with [`psla_report_free`].
 */
enum PslaStatus psla_evaluate(const double *predictions,
                              const uint8_t *labels,
                              size_t rows,
                              size_t cols,
                              struct PslaReport **out);

/**
 * Mean AP over classes with at least one positive.
 *
 * # Safety
 * `report` must come from [`psla_evaluate`].
 */
double psla_report_map(const struct PslaReport *report);

/**
 * Number of classes in the report.
 *
 * # Safety
 * `report` must come from [`psla_evaluate`].
 */
size_t psla_report_num_classes(const struct PslaReport *report);

/**
 * AP of class `k`; `PSLA_STATUS_UNDEFINED` for a class without positives.
 *
 * # Safety
 * `report` must come from [`psla_evaluate`]; `out` must be writable.
 */
enum PslaStatus psla_report_class_ap(const struct PslaReport *report, size_t k, double *out);

/**
 * Mean AUC and d-prime; either may be undefined.
 *
 * # Safety
 * `report` must come from [`psla_evaluate`]; outputs must be writable.
 */
enum PslaStatus psla_report_auc(const struct PslaReport *report, double *mean_auc, double *d_prime);

/**
 * # Safety
 * `report` must be null or come from [`psla_evaluate`], and is invalid
 * afterwards.
 */
void psla_report_free(struct PslaReport *report);

/**
 * Reads a corpus directory.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum PslaStatus psla_corpus_read(const char *path, struct PslaCorpus **out);

/**
 * Generates a synthetic long-tailed corpus with default feature settings.
 *
 * # Safety
 * `out` must be writable.
 */
enum PslaStatus psla_corpus_synthetic(size_t num_classes,
                                      size_t num_samples,
                                      double imbalance_ratio,
                                      uint64_t seed,
                                      struct PslaCorpus **out);

/**
 * # Safety
 * `corpus` must come from a `psla_corpus_*` constructor.
 */
size_t psla_corpus_len(const struct PslaCorpus *corpus);

/**
 * # Safety
 * `corpus` must come from a `psla_corpus_*` constructor.
 */
size_t psla_corpus_num_classes(const struct PslaCorpus *corpus);

/**
 * Writes the per-class sample counts into `counts[0..len]`.
 *
 * # Safety
 * `corpus` must be a live handle; `counts` must hold `len` values.
 */
enum PslaStatus psla_corpus_class_counts(const struct PslaCorpus *corpus,
                                         size_t *counts,
                                         size_t len);

/**
 * Writes the balanced-sampling weight of every sample into
 * `weights[0..len]`.
 *
 * # Safety
 * `corpus` must be a live handle; `weights` must hold `len` values.
 */
enum PslaStatus psla_corpus_sampling_weights(const struct PslaCorpus *corpus,
                                             double *weights,
                                             size_t len);

/**
 * # Safety
 * `corpus` must be null or a live handle, and is invalid afterwards.
 */
void psla_corpus_free(struct PslaCorpus *corpus);

/**
 * Trains the experiment described by a TOML config file and writes the
 * run's headline mAP (ensemble, else weight-averaged, else last-k mean).
 *
 * # Safety
 * `config_path` must be a nul-terminated string; `headline_map` must be
 * writable.
 */
enum PslaStatus psla_train(const char *config_path, double *headline_map);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PSLA_H */
