#ifndef BLOCH_HOMOG_H
#define BLOCH_HOMOG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BhStatus {
  BH_STATUS_OK = 0,
  BH_STATUS_NULL_POINTER = 1,
  BH_STATUS_INVALID_ARGUMENT = 2,
  BH_STATUS_VALIDATION = 3,
  BH_STATUS_NUMERICAL = 4,
  BH_STATUS_IO = 5,
  BH_STATUS_BUFFER_TOO_SMALL = 6,
  BH_STATUS_PANIC = 7,
} BhStatus;

/**
 * Effective characteristics bound to the model they came from.
 */
typedef struct BhEffective BhEffective;

/**
 * Operator model with the cutoff used for its cell problem.
 */
typedef struct BhModel BhModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version string of the library; static, do not free.
 */
const char *bh_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated).
 * Returns the message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t bh_last_error(char *buf, size_t len);

/**
 * Builds a gallery model by name, using the entry's default parameters.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BhStatus bh_model_from_gallery(const char *name, struct BhModel **out);

/**
 * Builds the model section of a TOML run config.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BhStatus bh_model_from_config(const char *path, struct BhModel **out);

/**
 * # Safety
 * `model` must be null or a handle from a `bh_model_*` constructor, freed once.
 */
void bh_model_free(struct BhModel *model);

/**
 * Writes the space dimension d, the symbol rows m and columns n.
 *
 * # Safety
 * All pointers must be valid.
 */
enum BhStatus bh_model_dims(const struct BhModel *model, size_t *d, size_t *m, size_t *n);

/**
 * Solves the cell problem; `cutoff` 0 keeps the model's default.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum BhStatus bh_effective_compute(const struct BhModel *model,
                                   size_t cutoff,
                                   struct BhEffective **out);

/**
 * # Safety
 * `eff` must be null or a handle from `bh_effective_compute`, freed once.
 */
void bh_effective_free(struct BhEffective *eff);

/**
 * Copies the m x m effective matrix g0 into `buf` (2 m^2 doubles).
 *
 * # Safety
 * `eff` must be a live handle and `buf` must hold `len` doubles.
 */
enum BhStatus bh_effective_g0(const struct BhEffective *eff, double *buf, size_t len);

/**
 * Germ eigenvalues gamma_l(theta) and corrector coefficients mu_l(theta),
 * n values each, for a unit direction of length d.
 *
 * # Safety
 * `theta` must hold `d` doubles; `gamma` and `mu` must hold `n` doubles.
 */
enum BhStatus bh_germ_at(const struct BhEffective *eff,
                         const double *theta,
                         size_t d,
                         double *gamma,
                         double *mu,
                         size_t n);

/**
 * Smoothed propagator error at one quasimomentum k (length d):
 * the norm of (exact - effective) evolution over time tau composed with
 * eps^s (|D|^2 + eps^2)^(-s/2). `sandwiched` selects the f-weighted form.
 *
 * # Safety
 * `k` must hold `d` doubles and `out` must be valid.
 */
enum BhStatus bh_fiber_error(const struct BhEffective *eff,
                             size_t fiber_cutoff,
                             const double *k,
                             size_t d,
                             double eps,
                             double tau,
                             double s,
                             bool sandwiched,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOCH_HOMOG_H */
