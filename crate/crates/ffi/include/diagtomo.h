#ifndef DIAGTOMO_H
#define DIAGTOMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DtStatus {
  DT_STATUS_OK = 0,
  DT_STATUS_NULL_POINTER = 1,
  DT_STATUS_INVALID_ARGUMENT = 2,
  DT_STATUS_INVALID_INPUT = 3,
  DT_STATUS_IO = 4,
  DT_STATUS_NOT_CONVERGED = 5,
  DT_STATUS_RANK_DEFICIENT = 6,
  DT_STATUS_NUMERICAL = 7,
  DT_STATUS_PANIC = 8,
} DtStatus;

// Shot records.
typedef struct DtDataset DtDataset;

// Fit result.
typedef struct DtReport DtReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or NULL. Valid until the next failing call.
const char *dt_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *dt_version(void);

// Closed-form χ of the n = 2 squeezed thermal state.
//
// # Safety
// `out_re` and `out_im` must be valid for writes.
enum DtStatus dt_chi_squeezed_exact(double r,
                                    double theta,
                                    double n_b,
                                    double xi_re,
                                    double xi_im,
                                    double *out_re,
                                    double *out_im);

// Clipped truncated model at one point; `len` coefficients given as
// separate real and imaginary arrays (`coeff_im` may be NULL for real ones).
//
// # Safety
// `coeff_re` (and `coeff_im` when non-NULL) must hold `len` values; outputs
// must be valid for writes.
enum DtStatus dt_eval_model(uintptr_t order,
                            const double *coeff_re,
                            const double *coeff_im,
                            uintptr_t len,
                            double xi_re,
                            double xi_im,
                            double r,
                            double theta,
                            double n_b,
                            double c_h,
                            double *out_re,
                            double *out_im);

// `P(+1)` in the x and y bases for a given χ.
//
// # Safety
// `p_x` and `p_y` must be valid for writes.
enum DtStatus dt_born_probabilities(double chi_re, double chi_im, double *p_x, double *p_y);

// Samples a dataset from the exact χ on the real-ξ lattice with equal shot
// allocation.
//
// # Safety
// `out` must be valid for writes; the handle is released with [`dt_dataset_free`].
enum DtStatus dt_dataset_generate(uintptr_t order,
                                  double xi_max,
                                  double r_max,
                                  double d_xi,
                                  double d_r,
                                  double n_b,
                                  uint64_t total_shots,
                                  uint64_t seed,
                                  struct DtDataset **out);

// Reads a dataset CSV.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum DtStatus dt_dataset_load(const char *path, struct DtDataset **out);

// Writes a dataset CSV atomically.
//
// # Safety
// `ds` must be a live handle and `path` NUL-terminated.
enum DtStatus dt_dataset_write(const struct DtDataset *ds, const char *path);

// Number of records, or 0 for NULL.
//
// # Safety
// `ds` must be NULL or a live handle.
uintptr_t dt_dataset_len(const struct DtDataset *ds);

// # Safety
// `ds` must be NULL or a handle not yet freed.
void dt_dataset_free(struct DtDataset *ds);

// Fits the model to a dataset; `cost` is 0 for ML and 1 for weighted LS.
// When the optimizer does not converge the best iterate is still returned
// through `out` together with `DT_STATUS_NOT_CONVERGED`.
//
// # Safety
// `ds` must be a live handle and `out` valid for writes.
enum DtStatus dt_estimate(const struct DtDataset *ds,
                          uintptr_t order,
                          double n_b,
                          bool heating,
                          uint32_t cost,
                          struct DtReport **out);

// Length of the flat parameter vector, or 0 for NULL.
//
// # Safety
// `rep` must be NULL or a live handle.
uintptr_t dt_report_num_params(const struct DtReport *rep);

// Copies the flat parameters (re parts, then im parts for n = 3, then `c_h`).
//
// # Safety
// `rep` must be a live handle and `buf` valid for `len` writes.
enum DtStatus dt_report_params(const struct DtReport *rep, double *buf, uintptr_t len);

// Copies `sqrt(diag I⁻¹)` over the flat parameters.
//
// # Safety
// `rep` must be a live handle and `buf` valid for `len` writes.
enum DtStatus dt_report_std(const struct DtReport *rep, double *buf, uintptr_t len);

// Writes the report CSV atomically.
//
// # Safety
// `rep` must be a live handle and `path` NUL-terminated.
enum DtStatus dt_report_write(const struct DtReport *rep, const char *path);

// # Safety
// `rep` must be NULL or a handle not yet freed.
void dt_report_free(struct DtReport *rep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIAGTOMO_H */
