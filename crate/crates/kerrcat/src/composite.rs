//! Oscillator ⊗ readout-cavity models: engineered dissipation, its adiabatic elimination,
//! κ_diss extraction and the linear two-mode decay used for exchange-rate calibration.

use serde::{Deserialize, Serialize};

use crate::dynamics::{BasisTag, DensityState, Jump, LindbladModel, SpectralPropagator};
use crate::error::{KerrcatError, Result};
use crate::fitting::{self, FitOptions, FitResult};
use crate::hilbert::{fock_operators, FockSpace};
use crate::linalg::{self, c, re, CMat, C64};
use crate::spectrum::{EigenProjection, ManifoldSpectrum, OscillatorParams, TWO_PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub kappa_out: f64,
    pub kappa_loss: f64,
    pub n_th_b: f64,
    pub chi_ab: f64,
    pub cavity_dim: usize,
}

impl CavityParams {
    /// Cavity dimension follows the bath: three levels when thermal, two when cold.
    pub fn new(kappa_out: f64, kappa_loss: f64, n_th_b: f64, chi_ab: f64) -> Self {
        Self { kappa_out, kappa_loss, n_th_b, chi_ab, cavity_dim: if n_th_b > 0.0 { 3 } else { 2 } }
    }

    /// κ_out/2π = 524 kHz, κ_l/2π = 157 kHz, χ_ab/2π = 180 kHz, cold bath.
    pub fn device() -> Self {
        Self::new(TWO_PI * 524e3, TWO_PI * 157e3, 0.0, TWO_PI * 180e3)
    }

    pub fn with_thermal(self, n_th_b: f64) -> Self {
        Self::new(self.kappa_out, self.kappa_loss, n_th_b, self.chi_ab)
    }

    pub fn kappa_b(&self) -> f64 {
        self.kappa_out + self.kappa_loss
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa_out", self.kappa_out), ("kappa_loss", self.kappa_loss), ("n_th_b", self.n_th_b)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(KerrcatError::param(name, "must be finite and non-negative"));
            }
        }
        if !self.chi_ab.is_finite() {
            return Err(KerrcatError::param("chi_ab", "must be finite"));
        }
        if !(2..=3).contains(&self.cavity_dim) {
            return Err(KerrcatError::param("cavity_dim", "must be 2 or 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationDrive {
    pub g_diss: f64,
    pub detuning: f64,
    pub target: (usize, usize),
}

impl DissipationDrive {
    pub fn resonant(g_diss: f64) -> Self {
        Self { g_diss, detuning: 0.0, target: (0, 1) }
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    /// `Δ_b = ω_target + δω_diss`.
    pub fn cavity_detuning(&self, spec: &ManifoldSpectrum) -> Result<f64> {
        Ok(spec.transition(self.target.0, self.target.1)? + self.detuning)
    }
}

/// Oscillator (eigen-projected) ⊗ cavity Lindblad model.
#[derive(Debug, Clone)]
pub struct CompositeModel {
    pub model: LindbladModel,
    pub projection: EigenProjection,
    pub cavity_dim: usize,
    pub cavity_detuning: f64,
}

impl CompositeModel {
    pub fn osc_dim(&self) -> usize {
        self.projection.dim()
    }

    pub fn dim(&self) -> usize {
        self.osc_dim() * self.cavity_dim
    }

    pub fn embed_osc(&self, op: &CMat) -> CMat {
        linalg::kron(op, &linalg::identity(self.cavity_dim))
    }

    /// `Ô_Z = (|+Z⟩⟨+Z| − |−Z⟩⟨−Z|) ⊗ I_b` in the projected basis.
    pub fn observable_z(&self, spec: &ManifoldSpectrum) -> Result<CMat> {
        Ok(self.embed_osc(&projected_z(&self.projection, spec)?))
    }

    pub fn manifold_projector(&self, i: usize) -> CMat {
        self.embed_osc(&self.projection.manifold_projector(i))
    }

    /// `ρ_osc ⊗ |0⟩⟨0|` for an oscillator state given in the projected basis.
    pub fn with_cavity_vacuum(&self, rho_osc: &CMat) -> Result<DensityState> {
        let mut vac = linalg::zeros(self.cavity_dim, self.cavity_dim);
        vac[(0, 0)] = re(1.0);
        DensityState::new(linalg::kron(rho_osc, &vac), BasisTag::Composite, vec![self.osc_dim(), self.cavity_dim])
    }
}

/// `|+Z⟩⟨+Z| − |−Z⟩⟨−Z|` in the eigen-projected oscillator basis.
pub fn projected_z(proj: &EigenProjection, spec: &ManifoldSpectrum) -> Result<CMat> {
    let m0 = spec.manifold(0)?;
    let n = proj.dim();
    let mut z = linalg::zeros(n, n);
    // |±Z⟩ = (e₊ ± e₋)/√2 so the operator only has off-diagonal ψ₀⁺/ψ₀⁻ entries.
    z[(m0.plus, m0.minus)] = re(1.0);
    z[(m0.minus, m0.plus)] = re(1.0);
    Ok(z)
}

/// Single-mode Lindblad model of the oscillator in the top-`m` eigenbasis with its thermal bath.
pub fn single_mode_model(osc: &OscillatorParams, proj: &EigenProjection) -> Result<LindbladModel> {
    let mut model = LindbladModel::new(proj.hamiltonian(), Vec::new(), BasisTag::Eigen)?;
    model.push_jump(osc.kappa_a * (1.0 + osc.n_th_a), proj.a.clone());
    model.push_jump(osc.kappa_a * osc.n_th_a, linalg::dagger(&proj.a));
    Ok(model)
}

pub fn build_coupled_model(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drive: &DissipationDrive,
    spec: &ManifoldSpectrum,
) -> Result<CompositeModel> {
    build_coupled_model_with(osc, cav, drive, spec, spec.default_truncation())
}

/// `H = H_osc ⊗ I + Δ_b I ⊗ b†b + g(a ⊗ b† + a† ⊗ b)` with thermal loss on both modes.
pub fn build_coupled_model_with(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drive: &DissipationDrive,
    spec: &ManifoldSpectrum,
    truncation: usize,
) -> Result<CompositeModel> {
    osc.validate()?;
    cav.validate()?;
    if drive.g_diss < 0.0 {
        return Err(KerrcatError::param("g_diss", "must be non-negative"));
    }
    let proj = EigenProjection::new(spec, truncation)?;
    let cd = cav.cavity_dim;
    let bops = fock_operators(FockSpace::new(cd)?);
    let (b, bd) = (bops.annihilation, bops.creation);
    let ia = linalg::identity(proj.dim());
    let ib = linalg::identity(cd);
    let a = &proj.a;
    let ad = linalg::dagger(a);
    let delta_b = drive.cavity_detuning(spec)?;
    let mut h = linalg::kron(&proj.hamiltonian(), &ib);
    h = &h + &linalg::scale_real(&linalg::kron(&ia, &bops.number), delta_b);
    let exchange = &linalg::kron(a, &bd) + &linalg::kron(&ad, &b);
    h = &h + &linalg::scale_real(&exchange, drive.g_diss);
    let mut model = LindbladModel::new(h, Vec::new(), BasisTag::Composite)?;
    model.push_jump(osc.kappa_a * (1.0 + osc.n_th_a), linalg::kron(a, &ib));
    model.push_jump(osc.kappa_a * osc.n_th_a, linalg::kron(&ad, &ib));
    let kb = cav.kappa_b();
    model.push_jump(kb * (1.0 + cav.n_th_b), linalg::kron(&ia, &b));
    model.push_jump(kb * cav.n_th_b, linalg::kron(&ia, &bd));
    Ok(CompositeModel { model, projection: proj, cavity_dim: cd, cavity_detuning: delta_b })
}

/// Lorentzian weight `κ_b g² / (κ_b²/4 + δ²)` of a transition detuned by `δ` from the cavity.
pub fn effective_rate(kappa_b: f64, g: f64, detuning: f64) -> f64 {
    kappa_b * g * g / (kappa_b * kappa_b / 4.0 + detuning * detuning)
}

/// One adiabatically eliminated channel: `Π_to a Π_from` at `rate`.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    pub from: usize,
    pub to: usize,
    pub cooling_rate: f64,
    pub heating_rate: f64,
    pub jump: CMat,
}

/// Cavity-mediated dissipators on the projected oscillator. Lowering the oscillator from
/// manifold `s` to `t` emits a cavity photon and is resonant when `Δ_b = Ē_s − Ē_t`.
pub fn effective_channels(
    cav: &CavityParams,
    drive: &DissipationDrive,
    spec: &ManifoldSpectrum,
    proj: &EigenProjection,
) -> Result<Vec<EffectiveChannel>> {
    let kb = cav.kappa_b();
    if drive.g_diss > kb {
        log::warn!("g_diss exceeds kappa_b; adiabatic elimination is not valid");
    } else if drive.g_diss > kb / 2.0 {
        log::warn!("g_diss above kappa_b/2; adiabatic elimination is marginal");
    }
    let delta_b = drive.cavity_detuning(spec)?;
    let nm = proj.manifolds_present();
    let mut out = Vec::new();
    for s in 0..nm {
        let ps = proj.manifold_projector(s);
        for t in 0..nm {
            let pt = proj.manifold_projector(t);
            let jump = &(&pt * &proj.a) * &ps;
            if linalg::max_abs(&jump) == 0.0 {
                continue;
            }
            let omega = spec.manifold(s)?.mean_energy - spec.manifold(t)?.mean_energy;
            let rate = effective_rate(kb, drive.g_diss, delta_b - omega);
            out.push(EffectiveChannel {
                from: s,
                to: t,
                cooling_rate: rate * (1.0 + cav.n_th_b),
                heating_rate: rate * cav.n_th_b,
                jump,
            });
        }
    }
    Ok(out)
}

pub fn effective_dissipators(
    cav: &CavityParams,
    drive: &DissipationDrive,
    spec: &ManifoldSpectrum,
    proj: &EigenProjection,
) -> Result<Vec<Jump>> {
    let mut jumps = Vec::new();
    for ch in effective_channels(cav, drive, spec, proj)? {
        if ch.cooling_rate > 0.0 {
            jumps.push(Jump::new(ch.cooling_rate, ch.jump.clone()));
        }
        if ch.heating_rate > 0.0 {
            jumps.push(Jump::new(ch.heating_rate, linalg::dagger(&ch.jump)));
        }
    }
    Ok(jumps)
}

/// Oscillator-only model with the cavity replaced by its effective dissipators.
pub fn effective_model(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drive: &DissipationDrive,
    spec: &ManifoldSpectrum,
    truncation: usize,
) -> Result<(LindbladModel, EigenProjection)> {
    let proj = EigenProjection::new(spec, truncation)?;
    let mut model = single_mode_model(osc, &proj)?;
    model.jumps.extend(effective_dissipators(cav, drive, spec, &proj)?);
    Ok((model, proj))
}

/// Sampling grid for the 1/e extraction: `t = 0` plus 199 log-spaced points up to `10/κ_est`.
pub fn kappa_diss_times(kappa_est: f64) -> Vec<f64> {
    let (lo, hi) = ((1e-3 / kappa_est).ln(), (10.0 / kappa_est).ln());
    std::iter::once(0.0).chain((0..199).map(|k| (lo + (hi - lo) * k as f64 / 198.0).exp())).collect()
}

/// Effective loss rate of manifold 1: `1/t` at the first 1/e crossing of its population,
/// starting from an equal mixture of `ψ₁^±` with an empty cavity, without intrinsic loss.
pub fn extract_kappa_diss(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drive: &DissipationDrive,
    spec: &ManifoldSpectrum,
) -> Result<f64> {
    if drive.g_diss <= 0.0 {
        return Err(KerrcatError::param("g_diss", "must be positive to extract kappa_diss"));
    }
    let osc0 = OscillatorParams { kappa_a: 0.0, n_th_a: 0.0, ..*osc };
    let cav0 = cav.with_thermal(0.0);
    let drive0 = DissipationDrive { detuning: 0.0, ..*drive };
    let cm = build_coupled_model(&osc0, &cav0, &drive0, spec)?;
    let m1 = spec.manifold(1)?;
    let n = cm.osc_dim();
    let mut rho_osc = linalg::zeros(n, n);
    rho_osc[(m1.plus, m1.plus)] = re(0.5);
    rho_osc[(m1.minus, m1.minus)] = re(0.5);
    let rho0 = cm.with_cavity_vacuum(&rho_osc)?;
    let kest = 4.0 * drive.g_diss.powi(2) / cav0.kappa_b();
    let times = kappa_diss_times(kest);
    let prop = SpectralPropagator::new(&crate::dynamics::build_liouvillian(&cm.model)?)?;
    let coeffs = prop.coefficients(rho0.matrix())?;
    let pop: Vec<f64> = prop.expectation_series(&coeffs, &cm.manifold_projector(1), &times).iter().map(|z| z.re).collect();
    let level = (-1.0f64).exp();
    for k in 1..times.len() {
        if pop[k] <= level {
            let (t0, t1, p0, p1) = (times[k - 1], times[k], pop[k - 1], pop[k]);
            let t = t0 + (p0 - level) * (t1 - t0) / (p0 - p1);
            return Ok(1.0 / t);
        }
    }
    Err(KerrcatError::NoCrossing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeDecayParams {
    pub g: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
}

impl TwoModeDecayParams {
    pub fn kappa_tot(&self) -> f64 {
        (self.kappa_a + self.kappa_b) / 4.0
    }

    /// `Λ = √((κ_b − κ_a)² − 16g²)`, imaginary in the underdamped regime.
    pub fn lambda(&self) -> C64 {
        re((self.kappa_b - self.kappa_a).powi(2) - 16.0 * self.g * self.g).sqrt()
    }
}

fn sinhc(z: C64) -> C64 {
    if z.norm() < 1e-4 {
        re(1.0) + z * z / 6.0
    } else {
        z.sinh() / z
    }
}

/// `|a(t)/a₀|²` and `b(t)/a₀` for linearly coupled modes with `b(0) = 0`.
pub fn analytic_two_mode_decay(p: &TwoModeDecayParams, t: f64) -> (f64, C64) {
    let lam = p.lambda();
    let z = lam * (t / 4.0);
    let env = (-p.kappa_tot() * t).exp();
    let sc = sinhc(z);
    let a = (z.cosh() + sc * ((p.kappa_b - p.kappa_a) * t / 4.0)) * env;
    let b = c(0.0, -p.g * t) * sc * env;
    (a.norm_sqr(), b)
}

/// Fits `scale·n̄_a(t; g) + offset` to each trace; `g` starts from a log-grid scan.
pub fn fit_gdiss_from_decay(traces: &[(Vec<f64>, Vec<f64>)], kappa_a: f64, kappa_b: f64) -> Result<Vec<FitResult>> {
    traces
        .iter()
        .map(|(t, y)| {
            if t.len() < 8 || t.len() != y.len() {
                return Err(KerrcatError::Fit("each trace needs at least 8 aligned points".into()));
            }
            let model = |p: &[f64]| -> Vec<f64> {
                let q = TwoModeDecayParams { g: p[0], kappa_a, kappa_b };
                t.iter().map(|&x| p[1] * analytic_two_mode_decay(&q, x).0 + p[2]).collect()
            };
            let scale_ref = kappa_a.max(kappa_b).max(1.0);
            let mut best: Option<(f64, f64, f64, f64)> = None;
            for k in 0..241 {
                let g = scale_ref * 10f64.powf(-3.0 + 5.0 * k as f64 / 240.0);
                let q = TwoModeDecayParams { g, kappa_a, kappa_b };
                let basis: Vec<f64> = t.iter().map(|&x| analytic_two_mode_decay(&q, x).0).collect();
                let n = basis.len() as f64;
                let (sx, sy) = (basis.iter().sum::<f64>(), y.iter().sum::<f64>());
                let sxx = basis.iter().map(|v| v * v).sum::<f64>();
                let sxy = basis.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
                let det = n * sxx - sx * sx;
                if det.abs() < 1e-300 {
                    continue;
                }
                let scale = (n * sxy - sx * sy) / det;
                let off = (sy - scale * sx) / n;
                let rss: f64 = basis.iter().zip(y).map(|(b, v)| (scale * b + off - v).powi(2)).sum();
                if best.map_or(true, |bb| rss < bb.3) {
                    best = Some((g, scale, off, rss));
                }
            }
            let (g0, s0, o0, _) = best.ok_or_else(|| KerrcatError::Fit("no usable starting point".into()))?;
            if s0.abs() < 1e-12 * y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300) {
                return Err(KerrcatError::Fit("singular-Jacobian: trace carries no decay signal".into()));
            }
            fitting::nonlinear_least_squares(
                model,
                y,
                None,
                &["g", "scale", "offset"],
                &[g0, s0, o0],
                Some(&[(0.0, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)]),
                FitOptions::default(),
            )
            .map(|r| r.with_fixed(&[("kappa_a", kappa_a), ("kappa_b", kappa_b)]))
        })
        .collect()
}
