use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composite::{build_coupled_model, single_mode_model, CavityParams, DissipationDrive};
use crate::dynamics::{evolve, steady_state, BasisTag, DensityState};
use crate::error::Result;
use crate::linalg::CMat;
use crate::spectrum::{EigenProjection, ManifoldSpectrum, OscillatorParams};

/// Cavity emptying plus the two readout pulses before populations are probed.
pub const DEFAULT_TAU_DELAY: f64 = 4.2e-6;

pub fn manifold_populations(proj: &EigenProjection, rho: &CMat) -> [f64; 3] {
    [0, 1, 2].map(|i| proj.manifold_population(rho, i))
}

/// Steady state of the oscillator alone, in its top eigenstates.
pub fn single_mode_steady_state(osc: &OscillatorParams, spec: &ManifoldSpectrum) -> Result<(EigenProjection, DensityState)> {
    let proj = EigenProjection::new(spec, spec.default_truncation())?;
    let ss = steady_state(&single_mode_model(osc, &proj)?)?;
    Ok((proj, ss))
}

/// `(p₀, p₁, p₂)` of the oscillator's steady state under its own thermal loss.
pub fn steady_leakage(osc: &OscillatorParams, spec: &ManifoldSpectrum) -> Result<[f64; 3]> {
    let (proj, ss) = single_mode_steady_state(osc, spec)?;
    Ok(manifold_populations(&proj, ss.matrix()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakagePoint {
    pub g_diss: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

/// Composite steady state for each drive, then `τ_delay` of free oscillator evolution
/// with the exchange switched off, then manifold populations.
pub fn steady_leakage_vs_dissipation(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drives: &[DissipationDrive],
    spec: &ManifoldSpectrum,
    tau_delay: f64,
) -> Result<Vec<LeakagePoint>> {
    drives
        .par_iter()
        .map(|drive| {
            let cm = build_coupled_model(osc, cav, drive, spec)?;
            let ss = steady_state(&cm.model)?;
            let joint = DensityState::new(ss.matrix().clone(), BasisTag::Composite, vec![cm.osc_dim(), cm.cavity_dim])?;
            let reduced = joint.trace_out_second()?;
            let free = single_mode_model(osc, &cm.projection)?;
            let rho = DensityState::new(reduced.matrix().clone(), BasisTag::Eigen, vec![cm.osc_dim()])?;
            let after = if tau_delay > 0.0 { evolve(&free, &rho, &[tau_delay])?.remove(0) } else { rho };
            let [p0, p1, p2] = manifold_populations(&cm.projection, after.matrix());
            Ok(LeakagePoint { g_diss: drive.g_diss, p0, p1, p2 })
        })
        .collect()
}

/// Steady leakage with an added pure-dephasing channel `κφ D[a†a]`.
pub fn dephasing_equivalent_heating(osc: &OscillatorParams, spec: &ManifoldSpectrum, kphi: f64) -> Result<[f64; 3]> {
    let proj = EigenProjection::new(spec, spec.default_truncation())?;
    let mut model = single_mode_model(osc, &proj)?;
    model.push_jump(kphi, proj.number.clone());
    let ss = steady_state(&model)?;
    Ok(manifold_populations(&proj, ss.matrix()))
}
