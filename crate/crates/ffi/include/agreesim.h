/* Generated by cbindgen from crates/ffi. Do not edit. */

#ifndef AGREESIM_H
#define AGREESIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum AgsStatus {
  AGS_STATUS_OK = 0,
  AGS_STATUS_NULL_POINTER = 1,
  AGS_STATUS_INVALID_UTF8 = 2,
  AGS_STATUS_INVALID_ARGUMENT = 3,
  AGS_STATUS_PARSE = 4,
  AGS_STATUS_VALIDATION = 5,
  AGS_STATUS_CONFIG = 6,
  AGS_STATUS_UNDEFINED = 7,
  AGS_STATUS_IO = 8,
  AGS_STATUS_PANIC = 9,
} AgsStatus;

typedef enum AgsVerdict {
  AGS_VERDICT_BELOW_BAND = 0,
  AGS_VERDICT_WITHIN_BAND = 1,
  AGS_VERDICT_ABOVE_BAND = 2,
} AgsVerdict;

/*
 Opaque multi-annotator dataset.
 */
typedef struct AgsDataset AgsDataset;

/*
 Opaque label conflation matrix.
 */
typedef struct AgsMatrix AgsMatrix;

/*
 Opaque simulation result: report plus sorted samples.
 */
typedef struct AgsRun AgsRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the most recent failure on this thread, or NULL. The pointer
 stays valid until the next failing call on this thread.
 */
const char *ags_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *ags_version(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void ags_string_free(char *s);

/*
 Parses a jsonl dataset (scheme header line first) from a string.

 # Safety
 `text` must be a NUL-terminated string; `out` must be writable.
 */
enum AgsStatus ags_dataset_from_jsonl(const char *text, struct AgsDataset **out);

/*
 Loads a dataset file. `format` is "jsonl", "tsv", "csv" or NULL to infer
 from the extension. Tabular files need `scheme_path`; it may be NULL for
 jsonl files with a scheme header.

 # Safety
 String arguments must be NUL-terminated or NULL where allowed; `out`
 must be writable.
 */
enum AgsStatus ags_dataset_load(const char *path,
                                const char *format,
                                const char *scheme_path,
                                struct AgsDataset **out);

/*
 # Safety
 `dataset` must come from this library and not have been freed. NULL is
 ignored.
 */
void ags_dataset_free(struct AgsDataset *dataset);

/*
 Number of documents, or 0 for NULL.

 # Safety
 `dataset` must be a live handle or NULL.
 */
size_t ags_dataset_len(const struct AgsDataset *dataset);

/*
 Serializes the dataset as jsonl. Free the result with `ags_string_free`.

 # Safety
 `dataset` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_dataset_to_jsonl(const struct AgsDataset *dataset, char **out);

/*
 Pooled pairwise agreement.

 # Safety
 `dataset` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_dataset_agreement(const struct AgsDataset *dataset, double *out);

/*
 Learns the conflation matrix of a dataset.

 # Safety
 `dataset` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_matrix_learn(const struct AgsDataset *dataset, struct AgsMatrix **out);

/*
 The built-in controversy pair counts.

 # Safety
 `out` must be writable.
 */
enum AgsStatus ags_matrix_reference(struct AgsMatrix **out);

/*
 Parses a matrix from its JSON file format.

 # Safety
 `json` must be NUL-terminated; `out` must be writable.
 */
enum AgsStatus ags_matrix_from_json(const char *json, struct AgsMatrix **out);

/*
 JSON file format of the matrix. Free with `ags_string_free`.

 # Safety
 `matrix` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_matrix_to_json(const struct AgsMatrix *matrix, char **out);

/*
 Count for the ordered label pair `(a, b)`.

 # Safety
 `matrix` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_matrix_count(const struct AgsMatrix *matrix,
                                int64_t a,
                                int64_t b,
                                uint64_t *out);

/*
 # Safety
 `matrix` must come from this library and not have been freed. NULL is
 ignored.
 */
void ags_matrix_free(struct AgsMatrix *matrix);

/*
 Generates a dataset calibrated to `matrix` with a fixed number of
 annotators per document.

 # Safety
 `matrix` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_synth_calibrated(const struct AgsMatrix *matrix,
                                    size_t n_docs,
                                    size_t annotators,
                                    uint64_t seed,
                                    struct AgsDataset **out);

/*
 Runs one simulation. `matrix` may be NULL when neither model conflates.
 `metric` may be NULL for AUC. `jobs` of 0 uses the default thread count.
 Percentiles reported are 5, 50 and 95.

 # Safety
 Handles must be live or NULL where allowed; strings NUL-terminated;
 `out` writable.
 */
enum AgsStatus ags_simulate(const struct AgsDataset *dataset,
                            const struct AgsMatrix *matrix,
                            const char *system_model,
                            const char *truth_model,
                            const char *metric,
                            size_t n_trials,
                            uint64_t seed,
                            size_t jobs,
                            struct AgsRun **out);

/*
 Nearest-rank percentile `q` in (0, 100) of the run's samples.

 # Safety
 `run` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_run_percentile(const struct AgsRun *run, double q, double *out);

/*
 Number of trials with a defined metric.

 # Safety
 `run` must be a live handle or NULL (returns 0).
 */
size_t ags_run_n_valid(const struct AgsRun *run);

/*
 Number of trials whose metric was undefined.

 # Safety
 `run` must be a live handle or NULL (returns 0).
 */
size_t ags_run_n_undefined(const struct AgsRun *run);

/*
 Borrows the sorted samples. The pointer lives as long as `run`.

 # Safety
 `run` must be a live handle; `data` and `len` must be writable.
 */
enum AgsStatus ags_run_samples(const struct AgsRun *run, const double **data, size_t *len);

/*
 JSON report. Free with `ags_string_free`.

 # Safety
 `run` must be a live handle; `out` must be writable.
 */
enum AgsStatus ags_run_report_json(const struct AgsRun *run, char **out);

/*
 # Safety
 `run` must come from this library and not have been freed. NULL is
 ignored.
 */
void ags_run_free(struct AgsRun *run);

/*
 Rank-based AUC. `truth[i]` is nonzero for positives.

 # Safety
 `truth` and `scores` must point to `n` readable elements.
 */
enum AgsStatus ags_auc(const uint8_t *truth, const double *scores, size_t n, double *out);

/*
 Percentile rank of `score` within `samples` and its verdict against the
 band `[low, high]`.

 # Safety
 `samples` must point to `n` readable values; outputs must be writable.
 */
enum AgsStatus ags_assess(double score,
                          const double *samples,
                          size_t n,
                          double low,
                          double high,
                          double *percentile_rank,
                          enum AgsVerdict *verdict);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGREESIM_H */
