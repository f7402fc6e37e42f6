#ifndef KERRCAT_H
#define KERRCAT_H

/* Generated by cbindgen from crates/kerrcat-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KcStatus {
  KC_OK = 0,
  KC_NULL_POINTER = 1,
  KC_INVALID_ARGUMENT = 2,
  // Solver or model failure.
  KC_PHYSICS = 3,
  KC_FIT = 4,
  KC_PANIC = 5,
  KC_BUFFER_TOO_SMALL = 6,
} KcStatus;

// Oscillator parameters.
typedef struct KcOscillator KcOscillator;

// Eigen-spectrum of the oscillator Hamiltonian, grouped into manifolds.
typedef struct KcSpectrum KcSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static nul-terminated string.
const char *kc_version(void);

// Length in bytes of the last error message on this thread, excluding the nul; 0 if none.
size_t kc_last_error_length(void);

// Copies the last error message (nul-terminated) into `buf`.
//
// # Safety
// `buf` must point to `len` writable bytes.
enum KcStatus kc_last_error_message(char *buf, size_t len);

// Device working point: K/2π = 1.74 MHz, ε₂ = 2.4K, Δ = 8K.
//
// # Safety
// `out` must be a valid pointer; the handle is released with [`kc_oscillator_free`].
enum KcStatus kc_oscillator_working_point(struct KcOscillator **out);

// Oscillator from explicit parameters. `t1_s` sets the single-photon loss;
// `g3_hz` may be 0 only together with `omit_stark`.
//
// # Safety
// `out` must be a valid pointer; the handle is released with [`kc_oscillator_free`].
enum KcStatus kc_oscillator_new(double k_hz,
                                double eps2_over_k,
                                double delta_over_k,
                                double g3_hz,
                                double t1_s,
                                double n_th,
                                bool omit_stark,
                                struct KcOscillator **out);

// # Safety
// `osc` must come from this library or be null; it must not be used afterwards.
void kc_oscillator_free(struct KcOscillator *osc);

// Diagonalizes the oscillator in a Fock space of `dim` states.
//
// # Safety
// `osc` must be a live handle and `out` a valid pointer; release with [`kc_spectrum_free`].
enum KcStatus kc_spectrum_build(const struct KcOscillator *osc,
                                size_t dim,
                                struct KcSpectrum **out);

// # Safety
// `spec` must come from this library or be null; it must not be used afterwards.
void kc_spectrum_free(struct KcSpectrum *spec);

// # Safety
// `spec` must be a live handle and `out` a valid pointer.
enum KcStatus kc_spectrum_manifold_count(const struct KcSpectrum *spec, size_t *out);

// Energy splitting of a manifold over h, in Hz.
//
// # Safety
// `spec` must be a live handle and `out` a valid pointer.
enum KcStatus kc_spectrum_splitting_hz(const struct KcSpectrum *spec, size_t manifold, double *out);

// Steady-state manifold populations (p0, p1, p2) without engineered dissipation.
//
// # Safety
// `osc` and `spec` must be live handles; `out` must point to 3 writable doubles.
enum KcStatus kc_steady_leakage(const struct KcOscillator *osc,
                                const struct KcSpectrum *spec,
                                double *out);

// Engineered `1 → 0` decay rate over 2π, in Hz, for a resonant drive of strength
// `g_hz` through the device readout cavity.
//
// # Safety
// `osc` and `spec` must be live handles and `out` a valid pointer.
enum KcStatus kc_kappa_diss_hz(const struct KcOscillator *osc,
                               const struct KcSpectrum *spec,
                               double g_hz,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KERRCAT_H */
