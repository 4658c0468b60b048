/* Generated by cbindgen from crates/multigauss-ffi. Do not edit. */

#ifndef MULTIGAUSS_H
#define MULTIGAUSS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MG_OK 0

/**
 * A required pointer argument was null.
 */
#define MG_ERR_NULL -1

/**
 * A string argument was not valid UTF-8.
 */
#define MG_ERR_UTF8 -2

/**
 * The library panicked; the handle arguments should be considered poisoned.
 */
#define MG_ERR_PANIC -3

#define MG_ERR_INVALID_LATTICE 10

#define MG_ERR_INVALID_STEP_DISTRIBUTION 11

#define MG_ERR_TORUS_TOO_SMALL 12

#define MG_ERR_SIZE_MISMATCH 13

#define MG_ERR_NOT_POSITIVE 20

#define MG_ERR_NONZERO_MEAN 21

#define MG_ERR_NEGATIVE_PIECE 22

#define MG_ERR_SCALE_OUT_OF_RANGE 23

#define MG_ERR_NOT_A_POWER 24

#define MG_ERR_QUADRATURE 25

#define MG_ERR_SUPPORT_TOO_LARGE 30

#define MG_ERR_PRECONDITION 31

#define MG_ERR_NOT_PERIODIC 40

#define MG_ERR_BUDGET 41

#define MG_ERR_EXPECTATION 42

#define MG_ERR_DIAGNOSTIC 50

#define MG_ERR_CONFIG 60

#define MG_ERR_IO 70

/**
 * Results of one experiment run.
 */
typedef struct MgArtifact MgArtifact;

/**
 * Resolved experiment configuration.
 */
typedef struct MgConfig MgConfig;

/**
 * Discrete Gaussian model on a torus.
 */
typedef struct MgDgModel MgDgModel;

/**
 * Exact moments of `(f, σ)` from height enumeration.
 */
typedef struct MgExactMoments {
  double partition;
  double second;
  double mgf;
  double characteristic;
  /**
   * Largest relative change against the next smaller height box.
   */
  double truncation;
} MgExactMoments;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *mg_version(void);

/**
 * Message of the last failure on this thread; valid until the next failing call.
 */
const char *mg_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void mg_string_free(char *s);

/**
 * Resolves the configuration of `experiment` from its defaults and the JSON
 * object `json` (may be null).
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
int32_t mg_config_new(const char *experiment, const char *json, struct MgConfig **out);

/**
 * Resolved configuration as JSON; release with [`mg_string_free`].
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
int32_t mg_config_to_json(const struct MgConfig *config, char **out);

/**
 * # Safety
 * `config` must be null or a live handle.
 */
void mg_config_free(struct MgConfig *config);

/**
 * Runs the configured experiment.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
int32_t mg_run(const struct MgConfig *config, struct MgArtifact **out);

/**
 * Whether the run met its own acceptance check.
 *
 * # Safety
 * `artifact` must be a live handle; `out` must be writable.
 */
int32_t mg_artifact_passed(const struct MgArtifact *artifact, bool *out);

/**
 * Experiment results as JSON; release with [`mg_string_free`].
 *
 * # Safety
 * `artifact` must be a live handle; `out` must be writable.
 */
int32_t mg_artifact_summary_json(const struct MgArtifact *artifact, char **out);

/**
 * Writes CSV, SVG and `summary.json` into `dir`.
 *
 * # Safety
 * `artifact` must be a live handle; `dir` must be NUL-terminated.
 */
int32_t mg_artifact_write(const struct MgArtifact *artifact, const char *dir);

/**
 * # Safety
 * `artifact` must be null or a live handle.
 */
void mg_artifact_free(struct MgArtifact *artifact);

/**
 * Model with spins in `2πZ` on a torus of side `side`. `j` is `"nn"`,
 * `"linf<R>"` or a JSON list of steps. With `pinned` the gauge `σ_0 = 0` is imposed.
 *
 * # Safety
 * `j` must be NUL-terminated; `out` must be writable.
 */
int32_t mg_dg_model_new(const char *j,
                        double beta,
                        size_t side,
                        double m2,
                        bool pinned,
                        struct MgDgModel **out);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
void mg_dg_model_free(struct MgDgModel *model);

/**
 * Energy of the configuration `σ = 2π·heights` (row-major, `len = side²`).
 *
 * # Safety
 * `model` must be a live handle; `heights` must hold `len` values; `out` must be writable.
 */
int32_t mg_dg_energy(const struct MgDgModel *model,
                     const int64_t *heights,
                     size_t len,
                     double *out);

/**
 * Moments of `(f, σ)` by enumerating heights in `[-k, k]`.
 *
 * # Safety
 * `model` must be a live handle; `f` must hold `len = side²` values; `out` must be writable.
 */
int32_t mg_dg_exact(const struct MgDgModel *model,
                    uint32_t k,
                    const double *f,
                    size_t len,
                    struct MgExactMoments *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTIGAUSS_H */
