#ifndef DD_H
#define DD_H

#include <stddef.h>
#include <stdint.h>

typedef enum DdStatus {
  DD_STATUS_OK = 0,
  DD_STATUS_NULL_POINTER = 1,
  DD_STATUS_INVALID_ARGUMENT = 2,
  DD_STATUS_DIMENSION_MISMATCH = 3,
  DD_STATUS_IO = 4,
  DD_STATUS_CONFIG = 5,
  DD_STATUS_PARTIAL_FAILURE = 6,
  DD_STATUS_INTERNAL = 7,
} DdStatus;

typedef enum DdWindowMode {
  DD_WINDOW_MODE_MEAN_DISTRIBUTION = 0,
  DD_WINDOW_MODE_MEAN_DIVERGENCE = 1,
} DdWindowMode;

// Opaque result of [`dd_dynamics_compute`].
typedef struct DdDynamics DdDynamics;

// Opaque result of [`dd_tsne`].
typedef struct DdProjection DdProjection;

// Dynamics for one post; absent values are NaN.
typedef struct DdDynamicsRow {
  double novelty;
  double transience;
  double resonance;
} DdDynamicsRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *dd_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *dd_version(void);

// Temperature-scaled softmax of `values[0..len]` into `out[0..len]`.
//
// # Safety
// `values` and `out` must each point to `len` valid `double`s.
enum DdStatus dd_softmax(const double *values, size_t len, double temperature, double *out);

// KL(p || q) in nats. Both inputs must be probability vectors with every
// entry at least 1e-12.
//
// # Safety
// `p` and `q` must each point to `len` valid `double`s; `out` must be valid
// for one write.
enum DdStatus dd_kl_divergence(const double *p, const double *q, size_t len, double *out);

// Deterministic hashed n-gram embedding of a UTF-8 string into
// `out[0..dimension]`.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must point to `dimension`
// writable `double`s.
enum DdStatus dd_fallback_embed(const char *text, size_t dimension, uint64_t seed, double *out);

// Novelty, transience and resonance for `n` distributions stored row-major
// in `dists` (`n * dim` values, each row a floored probability vector).
// `mode` is a [`DdWindowMode`] value.
//
// # Safety
// `dists` must point to `n * dim` valid `double`s; `out` must be valid for
// one write. Free the handle with [`dd_dynamics_free`].
enum DdStatus dd_dynamics_compute(const double *dists,
                                  size_t n,
                                  size_t dim,
                                  size_t window,
                                  uint32_t mode,
                                  struct DdDynamics **out);

// # Safety
// `h` must be a live handle from [`dd_dynamics_compute`].
size_t dd_dynamics_len(const struct DdDynamics *h);

// # Safety
// `h` must be a live handle; `out` must be valid for one write.
enum DdStatus dd_dynamics_get(const struct DdDynamics *h, size_t index, struct DdDynamicsRow *out);

// # Safety
// `h` must be NULL or a handle from [`dd_dynamics_compute`] not yet freed.
void dd_dynamics_free(struct DdDynamics *h);

// 2-D t-SNE of `n` row-major points of dimension `dim`, with default
// parameters apart from perplexity, iteration count and seed.
//
// # Safety
// `data` must point to `n * dim` valid `double`s; `out` must be valid for
// one write. Free the handle with [`dd_projection_free`].
enum DdStatus dd_tsne(const double *data,
                      size_t n,
                      size_t dim,
                      double perplexity,
                      size_t n_iter,
                      uint64_t seed,
                      struct DdProjection **out);

// # Safety
// `h` must be a live handle from [`dd_tsne`].
size_t dd_projection_len(const struct DdProjection *h);

// # Safety
// `h` must be a live handle; `x` and `y` must be valid for one write each.
enum DdStatus dd_projection_get(const struct DdProjection *h, size_t index, double *x, double *y);

// Number of objective samples (one per 50 iterations).
//
// # Safety
// `h` must be a live handle from [`dd_tsne`].
size_t dd_projection_objective_len(const struct DdProjection *h);

// Copies up to `len` objective samples into `out`; returns the number
// copied.
//
// # Safety
// `h` must be a live handle; `out` must point to `len` writable `double`s.
size_t dd_projection_objective(const struct DdProjection *h, double *out, size_t len);

// # Safety
// `h` must be NULL or a handle from [`dd_tsne`] not yet freed.
void dd_projection_free(struct DdProjection *h);

// DBSCAN over `n` row-major points of dimension `m`. Writes one label per
// point into `labels`; -1 marks noise. Points are clustered as given, with
// no standardization.
//
// # Safety
// `points` must point to `n * m` valid `double`s and `labels` to `n`
// writable `int64_t`s.
enum DdStatus dd_dbscan(const double *points,
                        size_t n,
                        size_t m,
                        double eps,
                        size_t min_pts,
                        int64_t *labels);

// Writes a synthetic JSONL corpus with a topic switch at `switch_index`.
//
// # Safety
// `community_id` and `path` must be NUL-terminated strings.
enum DdStatus dd_synth_corpus(const char *community_id,
                              size_t n_posts,
                              size_t switch_index,
                              uint64_t seed,
                              const char *path);

// Runs the full pipeline from a TOML config file. Returns
// `PartialFailure` when at least one community failed; the others are
// still written.
//
// # Safety
// `config_path` must be a NUL-terminated string.
enum DdStatus dd_run_pipeline(const char *config_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DD_H */
