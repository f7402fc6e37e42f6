use serde::{Deserialize, Serialize};

use super::{DecoherenceRates, PopulationEstimate, ReadoutContrasts};
use crate::composite::CavityParams;
use crate::error::{KerrcatError, Result};
use crate::fitting::{cascade_factor, monte_carlo_propagate, GaussianInput};
use crate::linalg::{c, C64};
use crate::spectrum::ManifoldSpectrum;

/// One-port reflection `S₁₁ = 1 − κ_out/(i·x + κ_tot/2)` at detuning `x` from resonance.
pub fn reflection(kappa_out: f64, kappa_tot: f64, x: f64) -> C64 {
    c(1.0, 0.0) - c(kappa_out, 0.0) / c(kappa_tot / 2.0, x)
}

/// Reflected phase per manifold, probing at the manifold-0 resonance plus `probe_offset`.
/// Manifold `i` pulls the cavity by `χ_ab·n̄_i`; phases stay on the branch of `M₀`.
pub fn cavity_readout_model(cav: &CavityParams, spec: &ManifoldSpectrum, probe_offset: f64) -> Result<ReadoutContrasts> {
    cav.validate()?;
    if spec.manifold_count() < 4 {
        return Err(KerrcatError::InvalidModel(format!("need four manifolds, spectrum has {}", spec.manifold_count())));
    }
    let kt = cav.kappa_b();
    let n0 = spec.mean_photon(0)?;
    let s0 = reflection(cav.kappa_out, kt, probe_offset);
    let base = s0.arg();
    let mut m = [0.0; 4];
    for (i, slot) in m.iter_mut().enumerate() {
        let x = cav.chi_ab * (n0 - spec.mean_photon(i)?) + probe_offset;
        *slot = base + (reflection(cav.kappa_out, kt, x) / s0).arg();
    }
    Ok(ReadoutContrasts::new(m[0], m[1], m[2], m[3]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSignals {
    pub times: Vec<f64>,
    pub t1_01: Vec<f64>,
    pub tphi_01: Vec<f64>,
    pub t1_12: Vec<f64>,
    pub tphi_12: Vec<f64>,
}

/// Relaxation, `0 → 1` cascade factor and coherence envelope for the four standard sequences.
///
/// * `T₁,01`: start in manifold 1, read.
/// * `Tφ,01`: `R₀₁(π/2)`, precess at `δω`, `R₀₁(π/2)`, read.
/// * `T₁,12`: start in manifold 2, `π₀₁`, read.
/// * `Tφ,12`: `R₁₂(π/2)` from manifold 1, precess, `R₁₂(π/2)`, `π₀₁`, read.
///
/// Excitation rates are ignored: these are the heating-free closed forms.
pub fn manifold_coherence_signals(
    rates: &DecoherenceRates,
    contrasts: &ReadoutContrasts,
    dw: f64,
    times: &[f64],
) -> Result<CoherenceSignals> {
    rates.validate()?;
    contrasts.validate()?;
    let (k01, k12) = (rates.k1_01, rates.k1_12);
    let [m0, m1, m2, _] = contrasts.as_array();
    let mut s = CoherenceSignals {
        times: times.to_vec(),
        t1_01: Vec::with_capacity(times.len()),
        tphi_01: Vec::with_capacity(times.len()),
        t1_12: Vec::with_capacity(times.len()),
        tphi_12: Vec::with_capacity(times.len()),
    };
    for &t in times {
        let e01 = (-k01 * t).exp();
        s.t1_01.push(m1 * e01 + m0 * (1.0 - e01));
        s.tphi_01.push(0.5 * (m1 + m0) + 0.5 * (m1 - m0) * (dw * t).cos() * (-rates.gamma_01() * t).exp());
        // Cascade 2 → 1 → 0, then π₀₁ swaps the readout of manifolds 0 and 1.
        let e12 = (-k12 * t).exp();
        let x = cascade_factor(k01, k12, t);
        s.t1_12.push(m2 * e12 + m0 * x + m1 * (1.0 - e12 - x));
        // Half the population starts in each of 1 and 2; the half in 1 also decays to 0.
        let r22 = 0.25 * e12;
        let r11 = 0.25 * e01 + 0.25 * x;
        let r00 = 0.5 - r11 - r22;
        let env = (-(rates.gamma_01() + rates.gamma_12()) * t).exp();
        s.tphi_12.push(2.0 * m1 * r00 + (m0 + m2) * (r11 + r22) + 0.5 * (m2 - m0) * (dw * t).cos() * env);
    }
    Ok(s)
}

/// `Δpk_ij = scale·(M_j − M_i)·(p_i − p_j)` with `p₃ = 0`.
pub fn spectroscopy_forward(pops: [f64; 3], contrasts: &ReadoutContrasts, scale: f64) -> [f64; 3] {
    let p = [pops[0], pops[1], pops[2], 0.0];
    let m = contrasts.as_array();
    [0, 1, 2].map(|i| scale * (m[i + 1] - m[i]) * (p[i] - p[i + 1]))
}

/// Exact solution of the sum rule and the two peak-ratio equations.
pub fn spectroscopy_solve(peaks: [f64; 3], contrasts: &ReadoutContrasts) -> Result<[f64; 3]> {
    if peaks[0] == 0.0 || !peaks[0].is_finite() {
        return Err(KerrcatError::param("dpk01", "must be finite and non-zero"));
    }
    let (e12, e23) = (contrasts.eta(1, 2), contrasts.eta(2, 3));
    if e12 == 0.0 || e23 == 0.0 || !(e12.is_finite() && e23.is_finite()) {
        return Err(KerrcatError::param("contrasts", "degenerate contrast differences"));
    }
    // a = (p₁−p₂)/(p₀−p₁), b = (p₂−p₃)/(p₀−p₁)
    let a = peaks[1] / peaks[0] / e12;
    let b = peaks[2] / peaks[0] / e23;
    let d = 1.0 / (1.0 + 2.0 * a + 3.0 * b);
    Ok([(1.0 + a + b) * d, (a + b) * d, b * d])
}

/// Point estimate plus Monte-Carlo spread over Gaussian peak uncertainties.
pub fn spectroscopy_inversion(
    peaks: &[GaussianInput; 3],
    contrasts: &ReadoutContrasts,
    n_samples: usize,
    seed: u64,
) -> Result<PopulationEstimate> {
    contrasts.validate()?;
    let p = spectroscopy_solve([peaks[0].mean, peaks[1].mean, peaks[2].mean], contrasts)?;
    let mc = monte_carlo_propagate(
        |x| {
            let q = spectroscopy_solve([x[0], x[1], x[2]], contrasts)?;
            Ok(q.iter().map(|&v| (v, 0.0)).collect())
        },
        peaks,
        n_samples,
        seed,
    )?;
    let est = PopulationEstimate {
        p0: p[0],
        p1: p[1],
        p2: p[2],
        sigma0: mc.outputs[0].sigma(),
        sigma1: mc.outputs[1].sigma(),
        sigma2: mc.outputs[2].sigma(),
    };
    est.validate()?;
    Ok(est)
}
