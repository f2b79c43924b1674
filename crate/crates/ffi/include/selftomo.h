#ifndef SELFTOMO_H
#define SELFTOMO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SELFTOMO_BASIS_X 0

#define SELFTOMO_BASIS_Y 1

#define SELFTOMO_BASIS_Z 2

typedef enum {
  SELFTOMO_STATUS_OK = 0,
  SELFTOMO_STATUS_NULL_POINTER = 1,
  // Parameters outside their physical range.
  SELFTOMO_STATUS_INVALID_ARGUMENT = 2,
  // Statistics that no model in range reproduces.
  SELFTOMO_STATUS_INCONSISTENT_DATA = 3,
  // Efficiency cannot be identified at zero mean photon number.
  SELFTOMO_STATUS_UNIDENTIFIABLE = 4,
  SELFTOMO_STATUS_CONFIG = 5,
  SELFTOMO_STATUS_PARSE = 6,
  SELFTOMO_STATUS_IO = 7,
  SELFTOMO_STATUS_INVALID_UTF8 = 8,
  SELFTOMO_STATUS_PANIC = 9,
} SelftomoStatus;

// Fuzzy joint POVM.
typedef struct SelftomoJointPovm SelftomoJointPovm;

// Quasi-POVM obtained by inverting a joint POVM.
typedef struct SelftomoQuasiPovm SelftomoQuasiPovm;

typedef struct {
  // Canonical representative of `±S` (pivot component nonnegative).
  double estimate[3];
  // 1-based index of the pivot component.
  uint32_t pivot_axis;
  bool clamped;
  double residual;
} SelftomoReconstruction;

typedef struct {
  double eta;
  double p_dark;
} SelftomoOnOffParams;

// `+` is a click, `−` no click.
typedef struct {
  double mm;
  double pm;
  double mp;
  double pp;
} SelftomoClickTable;

typedef struct {
  uint32_t basis;
  // Row-major proper rotation.
  double rotation[9];
} SelftomoSetting;

typedef struct {
  double min_entry;
  // Index of the probed setting attaining `min_entry`.
  size_t min_setting;
  // `(x1, y1, x2, y2)` as ±1.
  int32_t min_outcome[4];
  double min_eigenvalue;
  bool nonclassical;
} SelftomoNegativity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *selftomo_version(void);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next call into the library on this thread.
const char *selftomo_last_error(void);

// Seed for setting `index` derived from a base seed.
uint64_t selftomo_derive_seed(uint64_t base, uint64_t index);

// Six calibration probabilities `p(+,+)` in the order x0, y0, z0, x1, y1, z1.
//
// # Safety
// `s` must point to 3 doubles and `out` to 6.
SelftomoStatus selftomo_forward_probabilities(const double *s, double *out);

// Reconstructs `±S` from the six calibration probabilities.
// `epsilon <= 0` selects the default clamping threshold.
//
// # Safety
// `p` must point to 6 doubles and `out` to a writable struct.
SelftomoStatus selftomo_reconstruct_bloch(const double *p,
                                          double epsilon,
                                          SelftomoReconstruction *out);

// Joint table `(p(+,+), p(+,−), p(−,+), p(−,−))` of two qubit detectors.
//
// # Safety
// `s1`, `s2` must point to 3 doubles, `rotation` to 9 or be null, `out` to 4.
SelftomoStatus selftomo_joint_statistics(const double *s1,
                                         const double *s2,
                                         uint32_t basis,
                                         const double *rotation,
                                         double *out);

// Multinomial counts for a 4-outcome table.
//
// # Safety
// `probs` must point to 4 doubles and `out` to 4 integers.
SelftomoStatus selftomo_sample_counts(const double *probs,
                                      uint64_t shots,
                                      uint64_t seed,
                                      uint64_t *out);

// Closed-form click statistics for a two-mode squeezed vacuum of mean photon number `nbar`.
//
// # Safety
// `detector` and `out` must be valid.
SelftomoStatus selftomo_click_probabilities(const SelftomoOnOffParams *detector,
                                            double nbar,
                                            SelftomoClickTable *out);

// Truncated Fock-sum click statistics; the omitted weight is at most `tail`.
//
// # Safety
// `detector` and `out` must be valid.
SelftomoStatus selftomo_click_probabilities_oracle(const SelftomoOnOffParams *detector,
                                                   double nbar,
                                                   double tail,
                                                   SelftomoClickTable *out);

// Fits efficiency and dark-count probability; `residual` may be null.
//
// # Safety
// `table` and `out` must be valid; `residual` may be null.
SelftomoStatus selftomo_fit_onoff(const SelftomoClickTable *table,
                                  double nbar,
                                  SelftomoOnOffParams *out,
                                  double *residual);

// Creates a joint POVM; release it with [`selftomo_joint_povm_free`].
//
// # Safety
// The vectors must point to 3 doubles each and `out` must be valid.
SelftomoStatus selftomo_joint_povm_new(const double *s_x,
                                       const double *s_y,
                                       const double *s_xy,
                                       double gamma_x,
                                       double gamma_y,
                                       double gamma_xy,
                                       SelftomoJointPovm **out);

// # Safety
// `povm` must come from this library and not be used afterwards. Null is a no-op.
void selftomo_joint_povm_free(SelftomoJointPovm *povm);

// Parameters as `s_x, s_y, s_xy` (9 doubles) followed by `γ_X, γ_Y, γ_XY`.
//
// # Safety
// `povm` must be valid and `out` must point to 12 doubles.
SelftomoStatus selftomo_joint_povm_parameters(const SelftomoJointPovm *povm, double *out);

// Sixteen fuzzy joint probabilities for one setting.
//
// # Safety
// `povm` must be valid, `rotation` null or 9 doubles, `out` 16 doubles.
SelftomoStatus selftomo_joint_povm_statistics(const SelftomoJointPovm *povm,
                                              uint32_t basis,
                                              const double *rotation,
                                              double *out);

// Self-tomography from the six calibration tables (calibration order
// x0, y0, z0, x1, y1, z1; 16 entries each). Returns a new POVM handle;
// `completeness` may be null.
//
// # Safety
// `tables` must point to 96 doubles and `out` must be valid.
SelftomoStatus selftomo_joint_tomography(const double *tables,
                                         double completeness_tolerance,
                                         SelftomoJointPovm **out,
                                         double *completeness);

// Inverts a joint POVM; release the result with [`selftomo_quasi_povm_free`].
//
// # Safety
// `povm` and `out` must be valid.
SelftomoStatus selftomo_joint_povm_invert(const SelftomoJointPovm *povm, SelftomoQuasiPovm **out);

// # Safety
// `quasi` must come from this library and not be used afterwards. Null is a no-op.
void selftomo_quasi_povm_free(SelftomoQuasiPovm *quasi);

// The four quasi-POVM vectors, 3 doubles each, in outcome order.
//
// # Safety
// `quasi` must be valid and `out` must point to 12 doubles.
SelftomoStatus selftomo_quasi_povm_vectors(const SelftomoQuasiPovm *quasi, double *out);

// Sixteen inferred (possibly negative) joint probabilities for one setting.
//
// # Safety
// `quasi` must be valid, `rotation` null or 9 doubles, `out` 16 doubles.
SelftomoStatus selftomo_quasi_povm_inferred(const SelftomoQuasiPovm *quasi,
                                            uint32_t basis,
                                            const double *rotation,
                                            double *out);

// Negativity certificate over `count` probe settings (at least one).
//
// # Safety
// `quasi` and `out` must be valid and `settings` must point to `count` entries.
SelftomoStatus selftomo_quasi_povm_negativity(const SelftomoQuasiPovm *quasi,
                                              const SelftomoSetting *settings,
                                              size_t count,
                                              SelftomoNegativity *out);

// Runs an experiment from a JSON config and returns the JSON result
// document; release it with [`selftomo_string_free`].
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` must be valid.
SelftomoStatus selftomo_run_experiment_json(const char *config_json, char **out);

// # Safety
// `s` must come from this library and not be used afterwards. Null is a no-op.
void selftomo_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELFTOMO_H */
