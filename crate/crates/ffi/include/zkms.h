#ifndef ZKMS_H
#define ZKMS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum ZkmsStatus {
  ZKMS_STATUS_OK = 0,
  ZKMS_STATUS_INVALID_ARGUMENT = 1,
  ZKMS_STATUS_CONVERGENCE_FAILURE = 2,
  ZKMS_STATUS_BLOW_UP_DETECTED = 3,
  ZKMS_STATUS_MODULATION_FAILURE = 4,
  ZKMS_STATUS_INSUFFICIENT_RANGE = 5,
  ZKMS_STATUS_INVALID_CONFIG = 6,
  ZKMS_STATUS_UNSUPPORTED_CASE = 7,
  ZKMS_STATUS_FORMAT = 8,
  ZKMS_STATUS_IO = 9,
  ZKMS_STATUS_NULL_POINTER = 10,
  ZKMS_STATUS_PANIC = 11,
} ZkmsStatus;

/**
 * Opaque real field on a grid.
 */
typedef struct ZkmsField ZkmsField;

/**
 * Opaque sampling grid.
 */
typedef struct ZkmsGrid ZkmsGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *zkms_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated and
 * nul-terminated) and returns the full message length, or 0 when no error
 * is pending. `buf` may be null to query the length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t zkms_last_error_message(char *buf, size_t len);

/**
 * Creates a grid with `dim` axes (2 or 3), per-axis point counts and box
 * lengths, and comoving frame speed `frame`.
 *
 * # Safety
 * `points` and `lengths` must hold `dim` entries; `out` must be writable.
 */
enum ZkmsStatus zkms_grid_new(size_t dim,
                              const size_t *points,
                              const double *lengths,
                              double frame,
                              struct ZkmsGrid **out_grid);

/**
 * # Safety
 * `grid` must be null or a handle from [`zkms_grid_new`], freed once.
 */
void zkms_grid_free(struct ZkmsGrid *grid);

/**
 * Number of samples of fields on `grid` (0 for a null handle).
 *
 * # Safety
 * `grid` must be null or a live handle.
 */
size_t zkms_grid_len(const struct ZkmsGrid *grid);

/**
 * Copies `len` samples (row-major, axis 1 slowest) into a new field.
 *
 * # Safety
 * `values` must hold `len` doubles; `grid` must be live; `out` writable.
 */
enum ZkmsStatus zkms_field_from_values(const struct ZkmsGrid *grid,
                                       const double *values,
                                       size_t len,
                                       struct ZkmsField **out_field);

/**
 * Copies the samples of `field` into `buf`, which must have exactly
 * [`zkms_field_len`] entries.
 *
 * # Safety
 * `field` must be live and `buf` valid for `len` doubles.
 */
enum ZkmsStatus zkms_field_values(const struct ZkmsField *field, double *buf, size_t len);

/**
 * # Safety
 * `field` must be null or a live handle.
 */
size_t zkms_field_len(const struct ZkmsField *field);

/**
 * # Safety
 * `field` must be null or a handle returned by this library, freed once.
 */
void zkms_field_free(struct ZkmsField *field);

/**
 * Ground state `Q_c` of power `p` centred on `grid`; the sup-norm residual
 * of the elliptic equation is stored in `out_residual` when non-null.
 *
 * # Safety
 * `grid` must be live and `out_field` writable.
 */
enum ZkmsStatus zkms_ground_state(const struct ZkmsGrid *grid,
                                  double c,
                                  uint32_t p,
                                  struct ZkmsField **out_field,
                                  double *out_residual);

/**
 * Sum of solitons `σ_k Q_{c_k}(x - c_k t e_1 - y_k)` at time `t`;
 * `shifts` holds `count × dim` entries, `signs` may be null (all +1).
 *
 * # Safety
 * Arrays must hold the stated number of entries; `grid` live; `out` writable.
 */
enum ZkmsStatus zkms_multi_soliton(const struct ZkmsGrid *grid,
                                   uint32_t p,
                                   size_t count,
                                   const double *speeds,
                                   const double *shifts,
                                   const double *signs,
                                   double t,
                                   struct ZkmsField **out_field);

/**
 * Mass `½∫u²` of `field`.
 *
 * # Safety
 * `field` must be live and `out_mass` writable.
 */
enum ZkmsStatus zkms_mass(const struct ZkmsField *field, double *out_mass);

/**
 * Energy `∫ ½|∇u|² - u^{p+1}/(p+1)` of `field`.
 *
 * # Safety
 * `field` must be live and `out_energy` writable.
 */
enum ZkmsStatus zkms_energy(const struct ZkmsField *field, uint32_t p, double *out_energy);

/**
 * Integrates `field` from `t0` to `t1` with step magnitude `dt` (ETDRK4,
 * in the grid's comoving frame).
 *
 * # Safety
 * `field` must be live and `out_field` writable.
 */
enum ZkmsStatus zkms_evolve(const struct ZkmsField *field,
                            uint32_t p,
                            double t0,
                            double t1,
                            double dt,
                            struct ZkmsField **out_field);

/**
 * Negative eigenvalue `-λ₀` of the linearized operator around `Q_c`:
 * stores `λ₀ > 0`.
 *
 * # Safety
 * `grid` must be live and `out_lambda0` writable.
 */
enum ZkmsStatus zkms_ground_eigenvalue(const struct ZkmsGrid *grid,
                                       double c,
                                       uint32_t p,
                                       double *out_lambda0);

/**
 * Writes `field` at time `t` as a binary checkpoint.
 *
 * # Safety
 * `field` must be live; `path` a nul-terminated UTF-8 string.
 */
enum ZkmsStatus zkms_checkpoint_write(const struct ZkmsField *field,
                                      uint32_t p,
                                      double t,
                                      const char *path);

/**
 * Reads a checkpoint; `out_grid`, `out_p` and `out_time` may be null.
 *
 * # Safety
 * `path` must be a nul-terminated UTF-8 string; non-null outputs writable.
 */
enum ZkmsStatus zkms_checkpoint_read(const char *path,
                                     struct ZkmsField **out_field,
                                     struct ZkmsGrid **out_grid,
                                     uint32_t *out_p,
                                     double *out_time);

/**
 * Runs the command-line interface with `argc` arguments (including the
 * program name) and returns its exit status.
 *
 * # Safety
 * `argv` must hold `argc` nul-terminated strings.
 */
int32_t zkms_run_cli(size_t argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZKMS_H */
