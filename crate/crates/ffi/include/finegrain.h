#ifndef FINEGRAIN_H
#define FINEGRAIN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Static taxonomy codes.
#define FG_STATIC_C 0

#define FG_STATIC_UA 1

#define FG_STATIC_UE 2

// Dynamic taxonomy codes.
#define FG_DYNAMIC_C 0

#define FG_DYNAMIC_UAR 1

#define FG_DYNAMIC_UAI 2

#define FG_DYNAMIC_UE 3

// Status codes; the numeric values match the command-line exit codes.
typedef enum FgStatus {
  FG_STATUS_OK = 0,
  FG_STATUS_NULL_POINTER = 1,
  FG_STATUS_VALIDATION = 2,
  FG_STATUS_NUMERICAL = 3,
  FG_STATUS_DEGENERATE_TAXONOMY = 4,
  FG_STATUS_UNUSABLE_CALIBRATION = 5,
  FG_STATUS_UNDEFINED_CORRELATION = 6,
  FG_STATUS_BAD_MAGIC = 10,
  FG_STATUS_VERSION_MISMATCH = 11,
  FG_STATUS_TRUNCATED = 12,
  FG_STATUS_TRAILING_DATA = 13,
  FG_STATUS_LABELS_ABSENT = 14,
  FG_STATUS_CONFIG = 20,
  FG_STATUS_PARSE = 21,
  FG_STATUS_IO = 30,
  FG_STATUS_PANIC = 99,
} FgStatus;

// Gaussian prototype bank (per-group means, shared covariance).
typedef struct FgGaussianBank FgGaussianBank;

// A fitted model loaded from an FDBK file.
typedef struct FgModel FgModel;

// Exact k-th-nearest-neighbor store.
typedef struct FgNeighborBank FgNeighborBank;

// Per-sample result of [`fg_model_classify`]. Distances are NaN unless
// the static tag is UA.
typedef struct FgSample {
  uint8_t static_tag;
  uint8_t dynamic_tag;
  double eu;
  double entropy;
  double d_uar;
  double d_uai;
} FgSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *fg_last_error(void);

// Library version as a static NUL-terminated string.
const char *fg_version(void);

// Shannon entropy in nats of a probability vector.
//
// # Safety
// `probs` must point to `n_classes` doubles and `out` to one double.
enum FgStatus fg_entropy(const double *probs, size_t n_classes, double *out);

// Fits a bank on `n` row-major `d`-vectors with one group id per row.
//
// # Safety
// `rows` must hold `n * d` doubles, `groups` `n` ids; `out` must be valid.
enum FgStatus fg_gaussian_bank_fit(const double *rows,
                                   size_t n,
                                   size_t d,
                                   const uint32_t *groups,
                                   double shrinkage,
                                   struct FgGaussianBank **out);

// Dimension of the bank's vectors (0 for a null handle).
//
// # Safety
// `bank` must be null or a live handle.
size_t fg_gaussian_bank_dim(const struct FgGaussianBank *bank);

// Mahalanobis distance to the nearest centroid and that centroid's group.
//
// # Safety
// `bank` must be a live handle, `z` hold `d` doubles, outputs be valid.
enum FgStatus fg_gaussian_bank_score(const struct FgGaussianBank *bank,
                                     const double *z,
                                     size_t d,
                                     double *score,
                                     uint32_t *group);

// Scores `n` row-major vectors. `groups` may be null.
//
// # Safety
// `rows` must hold `n * d` doubles, `scores` (and `groups` if non-null)
// room for `n` values.
enum FgStatus fg_gaussian_bank_score_batch(const struct FgGaussianBank *bank,
                                           const double *rows,
                                           size_t n,
                                           size_t d,
                                           double *scores,
                                           uint32_t *groups);

// # Safety
// `bank` must be null or a handle not yet freed.
void fg_gaussian_bank_free(struct FgGaussianBank *bank);

// # Safety
// `rows` must hold `n * d` doubles; `out` must be valid.
enum FgStatus fg_neighbor_bank_new(const double *rows,
                                   size_t n,
                                   size_t d,
                                   size_t k,
                                   bool unit_norm,
                                   struct FgNeighborBank **out);

// Distance from `z` to its k-th nearest stored point.
//
// # Safety
// `bank` must be a live handle, `z` hold `d` doubles, `score` be valid.
enum FgStatus fg_neighbor_bank_score(const struct FgNeighborBank *bank,
                                     const double *z,
                                     size_t d,
                                     double *score);

// # Safety
// `bank` must be null or a handle not yet freed.
void fg_neighbor_bank_free(struct FgNeighborBank *bank);

// Loads a model file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum FgStatus fg_model_load(const char *path, struct FgModel **out);

// Loads a model from an in-memory FDBK buffer.
//
// # Safety
// `bytes` must hold `len` bytes; `out` must be valid.
enum FgStatus fg_model_load_bytes(const uint8_t *bytes, size_t len, struct FgModel **out);

// Number of classes (0 for a null handle).
//
// # Safety
// `model` must be null or a live handle.
size_t fg_model_n_classes(const struct FgModel *model);

// LI feature dimension expected by the model (0 for a null handle).
//
// # Safety
// `model` must be null or a live handle.
size_t fg_model_li_dim(const struct FgModel *model);

// Static LI tag and surrogate dynamic tag of one LI sample.
//
// # Safety
// `features` must hold `d` doubles, `probs` `n_classes`; `out` valid.
enum FgStatus fg_model_classify(const struct FgModel *model,
                                const double *features,
                                size_t d,
                                const double *probs,
                                size_t n_classes,
                                struct FgSample *out);

// # Safety
// `model` must be null or a handle not yet freed.
void fg_model_free(struct FgModel *model);

// Fine-grained query selection: UAR samples by ascending `ranking`, cut
// at `budget` (total cost, LI pass included; NaN for no limit). Writes
// the selected indices in query order to `out_indices` (room for `n`) and
// their number to `out_count`.
//
// # Safety
// `dynamic_tags` and `ranking` must hold `n` values, `out_indices` room
// for `n`, `out_count` be valid.
enum FgStatus fg_select_queries(const uint8_t *dynamic_tags,
                                const double *ranking,
                                size_t n,
                                double t_li,
                                double t_hi,
                                double budget,
                                size_t *out_indices,
                                size_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FINEGRAIN_H */
