//! C ABI over the kerrcat simulator.
//!
//! Every entry point returns a [`KcStatus`]. On failure the message is kept in a
//! thread-local slot readable through [`kc_last_error_message`] until the next
//! failing call on the same thread. Frequencies cross the boundary in Hz (not rad/s).
//! Panics never unwind into the caller; they come back as `KC_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kerrcat::composite::{extract_kappa_diss, CavityParams, DissipationDrive};
use kerrcat::protocols::steady_leakage;
use kerrcat::spectrum::{build_spectrum, ManifoldSpectrum, OscillatorParams, TWO_PI};
use kerrcat::KerrcatError;

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KcStatus {
    KC_OK = 0,
    KC_NULL_POINTER = 1,
    KC_INVALID_ARGUMENT = 2,
    /// Solver or model failure.
    KC_PHYSICS = 3,
    KC_FIT = 4,
    KC_PANIC = 5,
    KC_BUFFER_TOO_SMALL = 6,
}

/// Oscillator parameters.
pub struct KcOscillator(OscillatorParams);

/// Eigen-spectrum of the oscillator Hamiltonian, grouped into manifolds.
pub struct KcSpectrum(ManifoldSpectrum);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let msg = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: KcStatus, msg: impl Into<String>) -> KcStatus {
    set_error(msg);
    status
}

fn from_error(e: KerrcatError) -> KcStatus {
    let status = match e {
        _ if e.is_fit_failure() => KcStatus::KC_FIT,
        KerrcatError::InvalidParams { .. } | KerrcatError::InvalidDimension(_) | KerrcatError::MissingStarkInput => {
            KcStatus::KC_INVALID_ARGUMENT
        }
        _ => KcStatus::KC_PHYSICS,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> KcStatus) -> KcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let what = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(KcStatus::KC_PANIC, format!("panic: {what}"))
        }
    }
}

macro_rules! deref {
    ($p:expr, $name:literal) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(KcStatus::KC_NULL_POINTER, concat!("`", $name, "` is null")),
        }
    };
}

macro_rules! out {
    ($p:expr, $name:literal) => {
        match unsafe { $p.as_mut() } {
            Some(v) => v,
            None => return fail(KcStatus::KC_NULL_POINTER, concat!("`", $name, "` is null")),
        }
    };
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn kc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the last error message on this thread, excluding the nul; 0 if none.
#[no_mangle]
pub extern "C" fn kc_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |m| m.as_bytes().len()))
}

/// Copies the last error message (nul-terminated) into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kc_last_error_message(buf: *mut c_char, len: usize) -> KcStatus {
    if buf.is_null() {
        return KcStatus::KC_NULL_POINTER;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&[0u8][..], |m| m.as_bytes_with_nul());
        if bytes.len() > len {
            return KcStatus::KC_BUFFER_TOO_SMALL;
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, bytes.len());
        KcStatus::KC_OK
    })
}

/// Device working point: K/2π = 1.74 MHz, ε₂ = 2.4K, Δ = 8K.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with [`kc_oscillator_free`].
#[no_mangle]
pub unsafe extern "C" fn kc_oscillator_working_point(out: *mut *mut KcOscillator) -> KcStatus {
    guard(|| {
        let out = out!(out, "out");
        *out = Box::into_raw(Box::new(KcOscillator(OscillatorParams::working_point())));
        KcStatus::KC_OK
    })
}

/// Oscillator from explicit parameters. `t1_s` sets the single-photon loss;
/// `g3_hz` may be 0 only together with `omit_stark`.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with [`kc_oscillator_free`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn kc_oscillator_new(
    k_hz: f64,
    eps2_over_k: f64,
    delta_over_k: f64,
    g3_hz: f64,
    t1_s: f64,
    n_th: f64,
    omit_stark: bool,
    out: *mut *mut KcOscillator,
) -> KcStatus {
    guard(|| {
        let out = out!(out, "out");
        *out = ptr::null_mut();
        if !(t1_s > 0.0) {
            return fail(KcStatus::KC_INVALID_ARGUMENT, format!("invalid parameter `t1_s`: must be positive, got {t1_s}"));
        }
        let k = TWO_PI * k_hz;
        let p = OscillatorParams {
            k,
            eps2: eps2_over_k * k,
            delta: delta_over_k * k,
            g3: TWO_PI * g3_hz,
            kappa_a: 1.0 / t1_s,
            n_th_a: n_th,
            omit_stark,
            ..OscillatorParams::working_point()
        };
        if let Err(e) = p.validate() {
            return from_error(e);
        }
        *out = Box::into_raw(Box::new(KcOscillator(p)));
        KcStatus::KC_OK
    })
}

/// # Safety
/// `osc` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kc_oscillator_free(osc: *mut KcOscillator) {
    if !osc.is_null() {
        drop(Box::from_raw(osc));
    }
}

/// Diagonalizes the oscillator in a Fock space of `dim` states.
///
/// # Safety
/// `osc` must be a live handle and `out` a valid pointer; release with [`kc_spectrum_free`].
#[no_mangle]
pub unsafe extern "C" fn kc_spectrum_build(osc: *const KcOscillator, dim: usize, out: *mut *mut KcSpectrum) -> KcStatus {
    guard(|| {
        let out = out!(out, "out");
        *out = ptr::null_mut();
        let osc = deref!(osc, "osc");
        match build_spectrum(&osc.0, dim) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(KcSpectrum(s)));
                KcStatus::KC_OK
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `spec` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kc_spectrum_free(spec: *mut KcSpectrum) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kc_spectrum_manifold_count(spec: *const KcSpectrum, out: *mut usize) -> KcStatus {
    guard(|| {
        let out = out!(out, "out");
        *out = deref!(spec, "spec").0.manifold_count();
        KcStatus::KC_OK
    })
}

/// Energy splitting of a manifold over h, in Hz.
///
/// # Safety
/// `spec` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kc_spectrum_splitting_hz(spec: *const KcSpectrum, manifold: usize, out: *mut f64) -> KcStatus {
    guard(|| {
        let out = out!(out, "out");
        match deref!(spec, "spec").0.splitting(manifold) {
            Ok(v) => {
                *out = v / TWO_PI;
                KcStatus::KC_OK
            }
            Err(e) => from_error(e),
        }
    })
}

/// Steady-state manifold populations (p0, p1, p2) without engineered dissipation.
///
/// # Safety
/// `osc` and `spec` must be live handles; `out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kc_steady_leakage(osc: *const KcOscillator, spec: *const KcSpectrum, out: *mut f64) -> KcStatus {
    guard(|| {
        if out.is_null() {
            return fail(KcStatus::KC_NULL_POINTER, "`out` is null");
        }
        match steady_leakage(&deref!(osc, "osc").0, &deref!(spec, "spec").0) {
            Ok(p) => {
                ptr::copy_nonoverlapping(p.as_ptr(), out, 3);
                KcStatus::KC_OK
            }
            Err(e) => from_error(e),
        }
    })
}

/// Engineered `1 → 0` decay rate over 2π, in Hz, for a resonant drive of strength
/// `g_hz` through the device readout cavity.
///
/// # Safety
/// `osc` and `spec` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kc_kappa_diss_hz(osc: *const KcOscillator, spec: *const KcSpectrum, g_hz: f64, out: *mut f64) -> KcStatus {
    guard(|| {
        let out = out!(out, "out");
        if !(g_hz.is_finite() && g_hz > 0.0) {
            return fail(KcStatus::KC_INVALID_ARGUMENT, format!("invalid parameter `g_hz`: must be positive, got {g_hz}"));
        }
        let drive = DissipationDrive::resonant(TWO_PI * g_hz);
        match extract_kappa_diss(&deref!(osc, "osc").0, &CavityParams::device(), &drive, &deref!(spec, "spec").0) {
            Ok(k) => {
                *out = k / TWO_PI;
                KcStatus::KC_OK
            }
            Err(e) => from_error(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let s = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(s, KcStatus::KC_PANIC);
        assert!(LAST_ERROR.with(|e| e.borrow().as_ref().unwrap().to_str().unwrap().contains("boom")));
    }
}
