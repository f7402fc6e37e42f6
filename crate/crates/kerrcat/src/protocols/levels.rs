//! Few-level emulation of pulsed manifold experiments.
//!
//! Manifolds 0–2 are kept as parity pairs, ordered `(0+, 0−, 1+, 1−, 2+, 2−)`. Single-photon
//! operators flip parity, so transitions couple `i±` to `j∓` and the model splits into the
//! chains `(0+, 1−, 2+)` and `(0−, 1+, 2−)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    cavity_readout_model, CoherenceSignals, DecoherenceRates, PopulationEstimate, ReadoutContrasts,
};
use crate::composite::{single_mode_model, CavityParams};
use crate::dynamics::{build_liouvillian, evolve_time_dependent, BasisTag, DensityState, DriveSum, Jump, LindbladModel};
use crate::error::{KerrcatError, Result};
use crate::fitting::{
    self, double_exp_model, fit_decaying_sinusoid, fit_exp, linear_least_squares, monte_carlo_propagate, FitOptions,
    FitResult, GaussianInput,
};
use crate::linalg::{self, c, re, CMat};
use crate::spectrum::{EigenProjection, ManifoldSpectrum, OscillatorParams, TWO_PI};

const DIM: usize = 6;

/// Splittings above this (over 2π) are resolved by the pulses and break the reduction.
pub const DEGENERACY_GUARD_HZ: f64 = 500e3;

fn idx(manifold: usize, sign: usize) -> usize {
    2 * manifold + sign
}

/// Gaussian pulse sampled at slice midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub duration: f64,
    pub sigma: f64,
    pub slices: usize,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self { duration: 2e-6, sigma: 332e-9, slices: 200 }
    }
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.sigma > 0.0) || self.slices == 0 {
            return Err(KerrcatError::param("pulse", "duration, sigma and slices must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.duration / self.slices as f64
    }

    pub fn value(&self, t: f64) -> f64 {
        (-(t - self.duration / 2.0).powi(2) / (2.0 * self.sigma * self.sigma)).exp()
    }

    pub fn envelope(&self) -> Vec<f64> {
        (0..self.slices).map(|k| self.value((k as f64 + 0.5) * self.dt())).collect()
    }

    /// Midpoint quadrature of the envelope.
    pub fn area(&self) -> f64 {
        self.envelope().iter().sum::<f64>() * self.dt()
    }

    /// Spectral half-width the selectivity check compares transition spacings against.
    pub fn bandwidth(&self) -> f64 {
        3.0 / self.sigma
    }
}

/// Three manifolds with degenerate-or-split parity pairs and Markovian rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub rates: DecoherenceRates,
    /// `ΔE_i` (rad/s), entering as `±ΔE_i/2` in the frame of the manifold mean.
    pub splittings: [f64; 3],
    /// `|⟨ψ_{t+1}^∓|a + a†|ψ_t^±⟩|` for transitions `t = 0, 1`, from the `+` and `−` state.
    pub couplings: [[f64; 2]; 2],
}

impl ManifoldModel {
    pub fn ideal(rates: DecoherenceRates) -> Self {
        Self { rates, splittings: [0.0; 3], couplings: [[1.0; 2]; 2] }
    }

    /// Splittings and transition matrix elements taken from the oscillator spectrum.
    pub fn from_spectrum(spec: &ManifoldSpectrum, rates: DecoherenceRates) -> Result<Self> {
        let proj = EigenProjection::new(spec, spec.default_truncation())?;
        let x = &proj.a + &linalg::dagger(&proj.a);
        let mut couplings = [[0.0; 2]; 2];
        for (t, row) in couplings.iter_mut().enumerate() {
            let (mi, mj) = (spec.manifold(t)?, spec.manifold(t + 1)?);
            row[0] = x[(mj.minus, mi.plus)].norm();
            row[1] = x[(mj.plus, mi.minus)].norm();
        }
        let splittings = [spec.splitting(0)?, spec.splitting(1)?, spec.splitting(2)?];
        Ok(Self { rates, splittings, couplings })
    }

    pub fn with_rates(&self, rates: DecoherenceRates) -> Self {
        Self { rates, ..self.clone() }
    }

    /// Refuses splittings the pulses would resolve.
    pub fn check_degenerate(&self) -> Result<()> {
        for (i, s) in self.splittings.iter().enumerate() {
            if s.abs() / TWO_PI > DEGENERACY_GUARD_HZ {
                return Err(KerrcatError::InvalidModel(format!(
                    "splitting of manifold {i} is {:.0} Hz, above the {DEGENERACY_GUARD_HZ:.0} Hz reduction guard",
                    s.abs() / TWO_PI
                )));
            }
        }
        Ok(())
    }

    pub fn projector(manifold: usize) -> CMat {
        let mut p = linalg::zeros(DIM, DIM);
        p[(idx(manifold, 0), idx(manifold, 0))] = re(1.0);
        p[(idx(manifold, 1), idx(manifold, 1))] = re(1.0);
        p
    }

    pub fn readout(contrasts: [f64; 3]) -> CMat {
        linalg::diag_real(&[contrasts[0], contrasts[0], contrasts[1], contrasts[1], contrasts[2], contrasts[2]])
    }

    /// Each manifold's population shared equally between its parity states.
    pub fn diagonal_state(pops: [f64; 3]) -> CMat {
        linalg::diag_real(&[pops[0] / 2.0, pops[0] / 2.0, pops[1] / 2.0, pops[1] / 2.0, pops[2] / 2.0, pops[2] / 2.0])
    }

    pub fn populations(rho: &CMat) -> [f64; 3] {
        [0, 1, 2].map(|i| rho[(idx(i, 0), idx(i, 0))].re + rho[(idx(i, 1), idx(i, 1))].re)
    }

    /// Free Hamiltonian; `precession = (manifold, δω)` adds `δω·Π_manifold`.
    pub fn hamiltonian(&self, precession: Option<(usize, f64)>) -> CMat {
        let mut d = [0.0; DIM];
        for i in 0..3 {
            d[idx(i, 0)] = self.splittings[i] / 2.0;
            d[idx(i, 1)] = -self.splittings[i] / 2.0;
        }
        if let Some((m, w)) = precession {
            d[idx(m, 0)] += w;
            d[idx(m, 1)] += w;
        }
        linalg::diag_real(&d)
    }

    /// Parity-flipping `|j, ∓⟩⟨i, ±|` summed over both chains.
    fn hop(from: usize, to: usize) -> CMat {
        let mut l = linalg::zeros(DIM, DIM);
        l[(idx(to, 1), idx(from, 0))] = re(1.0);
        l[(idx(to, 0), idx(from, 1))] = re(1.0);
        l
    }

    /// `κ₁ D[|i⟩⟨j|]`, `2κφ D[Π_j]` and `κ↑ D[|j⟩⟨i|]` for the two transitions.
    pub fn jumps(&self) -> Vec<Jump> {
        let r = &self.rates;
        let mut out = vec![
            Jump::new(r.k1_01, Self::hop(1, 0)),
            Jump::new(r.k1_12, Self::hop(2, 1)),
            Jump::new(2.0 * r.kphi_01, Self::projector(1)),
            Jump::new(2.0 * r.kphi_12, Self::projector(2)),
        ];
        if r.kup_01 > 0.0 {
            out.push(Jump::new(r.kup_01, Self::hop(0, 1)));
        }
        if r.kup_12 > 0.0 {
            out.push(Jump::new(r.kup_12, Self::hop(1, 2)));
        }
        out
    }

    pub fn lindblad(&self, precession: Option<(usize, f64)>) -> Result<LindbladModel> {
        LindbladModel::new(self.hamiltonian(precession), self.jumps(), BasisTag::Eigen)
    }

    pub fn liouvillian(&self, precession: Option<(usize, f64)>) -> Result<CMat> {
        build_liouvillian(&self.lindblad(precession)?)
    }

    /// Drive on transition `t ↔ t+1`, scaled so the mean chain coupling is one.
    pub fn drive(&self, t: usize) -> CMat {
        let w = self.couplings[t];
        let mean = (w[0] + w[1]) / 2.0;
        let mut x = linalg::zeros(DIM, DIM);
        for (s, ws) in w.iter().enumerate() {
            let (a, b) = (idx(t + 1, 1 - s), idx(t, s));
            x[(a, b)] = re(ws / mean);
            x[(b, a)] = re(ws / mean);
        }
        x
    }

    /// Instantaneous `exp(−iθX/2)` on transition `t ↔ t+1`.
    pub fn rotation(&self, t: usize, theta: f64) -> Result<CMat> {
        linalg::hermitian_function(&self.drive(t), |x| c(0.0, -theta * x / 2.0).exp())
    }

    /// Superoperator of a Gaussian pulse of total rotation `θ`, with dissipation on.
    pub fn pulse(&self, t: usize, theta: f64, shape: &PulseShape) -> Result<CMat> {
        shape.validate()?;
        let l0 = self.liouvillian(None)?;
        let hx = LindbladModel::new(linalg::scale_real(&self.drive(t), 0.5), Vec::new(), BasisTag::Eigen)?;
        let lx = build_liouvillian(&hx)?;
        let dt = shape.dt();
        let area = shape.area();
        let mut total = linalg::identity(DIM * DIM);
        for e in shape.envelope() {
            let step = &l0 + &linalg::scale_real(&lx, theta * e / area);
            total = &linalg::expm(&linalg::scale_real(&step, dt)) * &total;
        }
        Ok(total)
    }

    /// Detailed balance along the ladder.
    pub fn steady_populations(&self) -> Result<[f64; 3]> {
        let r = &self.rates;
        if r.k1_01 <= 0.0 || r.k1_12 <= 0.0 {
            return Err(KerrcatError::InvalidModel("relaxation rates must be positive".into()));
        }
        let x1 = r.kup_01 / r.k1_01;
        let x2 = x1 * r.kup_12 / r.k1_12;
        let z = 1.0 + x1 + x2;
        Ok([1.0 / z, x1 / z, x2 / z])
    }
}

pub(crate) fn apply_superop(s: &CMat, rho: &CMat) -> CMat {
    linalg::unvectorize(&linalg::matvec(s, &linalg::vectorize(rho)), rho.nrows())
}

fn apply_unitary(u: &CMat, rho: &CMat) -> CMat {
    &(u * rho) * &linalg::dagger(u)
}

fn read(rho: &CMat, contrasts: [f64; 3]) -> f64 {
    let p = ManifoldModel::populations(rho);
    p[0] * contrasts[0] + p[1] * contrasts[1] + p[2] * contrasts[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CoherenceExperiment {
    T1_01,
    Tphi01,
    T1_12,
    Tphi12,
}

/// Numeric propagation of one sequence with ideal instantaneous pulses.
pub fn simulate_experiment(
    model: &ManifoldModel,
    kind: CoherenceExperiment,
    contrasts: [f64; 3],
    dw: f64,
    times: &[f64],
) -> Result<Vec<f64>> {
    use CoherenceExperiment::*;
    let half01 = model.rotation(0, std::f64::consts::FRAC_PI_2)?;
    let half12 = model.rotation(1, std::f64::consts::FRAC_PI_2)?;
    let pi01 = model.rotation(0, std::f64::consts::PI)?;
    let (rho0, precession, post): (CMat, Option<(usize, f64)>, Vec<&CMat>) = match kind {
        T1_01 => (ManifoldModel::diagonal_state([0.0, 1.0, 0.0]), None, vec![]),
        Tphi01 => (apply_unitary(&half01, &ManifoldModel::diagonal_state([1.0, 0.0, 0.0])), Some((1, dw)), vec![&half01]),
        T1_12 => (ManifoldModel::diagonal_state([0.0, 0.0, 1.0]), None, vec![&pi01]),
        Tphi12 => (
            apply_unitary(&half12, &ManifoldModel::diagonal_state([0.0, 1.0, 0.0])),
            Some((2, dw)),
            vec![&half12, &pi01],
        ),
    };
    let l = model.liouvillian(precession)?;
    times
        .par_iter()
        .map(|&t| {
            let mut rho = apply_superop(&linalg::expm(&linalg::scale_real(&l, t)), &rho0);
            for u in &post {
                rho = apply_unitary(u, &rho);
            }
            Ok(read(&rho, contrasts))
        })
        .collect()
}

/// Numeric counterpart of [`super::manifold_coherence_signals`].
pub fn simulate_coherence_experiments(
    model: &ManifoldModel,
    contrasts: &ReadoutContrasts,
    dw: f64,
    times: &[f64],
) -> Result<CoherenceSignals> {
    let m = [contrasts.m0, contrasts.m1, contrasts.m2];
    Ok(CoherenceSignals {
        times: times.to_vec(),
        t1_01: simulate_experiment(model, CoherenceExperiment::T1_01, m, dw, times)?,
        tphi_01: simulate_experiment(model, CoherenceExperiment::Tphi01, m, dw, times)?,
        t1_12: simulate_experiment(model, CoherenceExperiment::T1_12, m, dw, times)?,
        tphi_12: simulate_experiment(model, CoherenceExperiment::Tphi12, m, dw, times)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiTraces {
    pub amplitudes: Vec<f64>,
    /// `π₀₁ → R₁₂(πA) → π₀₁`
    pub with_pi: Vec<f64>,
    /// `R₁₂(πA) → π₀₁`
    pub without_pi: Vec<f64>,
}

/// Final manifold populations of both Rabi sequences for each pure initial manifold:
/// `with_pi[a][i][k]` is the population of `k` after starting in `i` at amplitude `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiResponse {
    pub amplitudes: Vec<f64>,
    pub with_pi: Vec<[[f64; 3]; 3]>,
    pub without_pi: Vec<[[f64; 3]; 3]>,
}

impl RabiResponse {
    /// Traces are linear in the initial populations and in the contrasts.
    pub fn traces(&self, pops: [f64; 3], contrasts: [f64; 3]) -> RabiTraces {
        let fold = |r: &[[f64; 3]; 3]| -> f64 { (0..3).map(|i| pops[i] * (0..3).map(|k| contrasts[k] * r[i][k]).sum::<f64>()).sum() };
        RabiTraces {
            amplitudes: self.amplitudes.clone(),
            with_pi: self.with_pi.iter().map(fold).collect(),
            without_pi: self.without_pi.iter().map(fold).collect(),
        }
    }
}

pub fn rabi_response(model: &ManifoldModel, shape: &PulseShape, amplitudes: &[f64]) -> Result<RabiResponse> {
    let pi01 = model.pulse(0, std::f64::consts::PI, shape)?;
    let rows: Vec<([[f64; 3]; 3], [[f64; 3]; 3])> = amplitudes
        .par_iter()
        .map(|&a| {
            let p12 = model.pulse(1, std::f64::consts::PI * a, shape)?;
            let without = &pi01 * &p12;
            let with = &without * &pi01;
            let mut w = [[0.0; 3]; 3];
            let mut wo = [[0.0; 3]; 3];
            for i in 0..3 {
                let mut e = [0.0; 3];
                e[i] = 1.0;
                let rho = ManifoldModel::diagonal_state(e);
                w[i] = ManifoldModel::populations(&apply_superop(&with, &rho));
                wo[i] = ManifoldModel::populations(&apply_superop(&without, &rho));
            }
            Ok((w, wo))
        })
        .collect::<Result<_>>()?;
    Ok(RabiResponse {
        amplitudes: amplitudes.to_vec(),
        with_pi: rows.iter().map(|r| r.0).collect(),
        without_pi: rows.iter().map(|r| r.1).collect(),
    })
}

fn check_selectivity(spec: &ManifoldSpectrum, shape: &PulseShape) -> Result<()> {
    let sep = (spec.transition(0, 1)? - spec.transition(1, 2)?).abs();
    let limit = shape.bandwidth();
    if sep < limit {
        return Err(KerrcatError::SelectivityViolation { separation: sep, limit });
    }
    Ok(())
}

/// Rabi-contrast emulation for an oscillator spectrum. Uses the reduced manifold model
/// unless a splitting exceeds the guard, in which case the projected oscillator is
/// driven at the transition carriers directly.
pub fn rabi_contrast_protocol(
    osc: &OscillatorParams,
    cav: &CavityParams,
    spec: &ManifoldSpectrum,
    rates: &DecoherenceRates,
    true_p: &PopulationEstimate,
    shape: &PulseShape,
    amplitudes: &[f64],
) -> Result<RabiTraces> {
    true_p.validate()?;
    check_selectivity(spec, shape)?;
    let rc = cavity_readout_model(cav, spec, 0.0)?;
    let contrasts = [rc.m0, rc.m1, rc.m2];
    let model = ManifoldModel::from_spectrum(spec, *rates)?;
    match model.check_degenerate() {
        Ok(()) => Ok(rabi_response(&model, shape, amplitudes)?.traces(true_p.as_array(), contrasts)),
        Err(e) => {
            log::warn!("{e}; falling back to carrier-level propagation");
            rabi_traces_full(osc, spec, true_p.as_array(), contrasts, shape, amplitudes)
        }
    }
}

/// Cross-check mode: the eigen-projected oscillator under `H_E + Ω(t)cos(ω_d t)(a + a†)`,
/// with its own thermal loss in place of the manifold rates.
pub fn rabi_traces_full(
    osc: &OscillatorParams,
    spec: &ManifoldSpectrum,
    pops: [f64; 3],
    contrasts: [f64; 3],
    shape: &PulseShape,
    amplitudes: &[f64],
) -> Result<RabiTraces> {
    shape.validate()?;
    let proj = EigenProjection::new(spec, spec.default_truncation())?;
    let n = proj.dim();
    let e_ref = spec.manifold(1)?.mean_energy;
    let h0 = linalg::diag_real(&proj.energies.iter().map(|e| e - e_ref).collect::<Vec<_>>());
    let x = &proj.a + &linalg::dagger(&proj.a);
    let jumps = single_mode_model(osc, &proj)?.jumps;
    let mut rho0 = linalg::zeros(n, n);
    for (i, p) in pops.iter().enumerate() {
        let m = spec.manifold(i)?;
        rho0[(m.plus, m.plus)] = re(p / 2.0);
        rho0[(m.minus, m.minus)] = re(p / 2.0);
    }
    let readout = {
        let mut r = linalg::zeros(n, n);
        for (i, m) in contrasts.iter().enumerate() {
            r = &r + &linalg::scale_real(&proj.manifold_projector(i), *m);
        }
        r
    };
    // Fine quadrature of the continuous envelope for the π calibration.
    let fine = PulseShape { slices: 4000, ..*shape };
    let area = fine.area();
    let pulse = |rho: &DensityState, t: usize, theta: f64| -> Result<DensityState> {
        if theta == 0.0 {
            return Ok(rho.clone());
        }
        let (mi, mj) = (spec.manifold(t)?, spec.manifold(t + 1)?);
        let mean = (x[(mj.minus, mi.plus)].norm() + x[(mj.plus, mi.minus)].norm()) / 2.0;
        let wd = spec.transition(t, t + 1)?.abs();
        let amp = theta / (area * mean);
        let s = *shape;
        let h = DriveSum::new(n).term(&h0, |_| re(1.0)).term(&x, move |tt| re(amp * s.value(tt) * (wd * tt).cos()));
        let bound = h.spectral_bound(s.duration / 2.0) + amp * linalg::max_abs(&x) * n as f64;
        evolve_time_dependent(&h, &jumps, rho, s.duration, 1.0 / (50.0 * bound))
    };
    let start = DensityState::new(rho0, BasisTag::Eigen, vec![n])?;
    let pi01 = |rho: &DensityState| pulse(rho, 0, std::f64::consts::PI);
    let rows: Vec<(f64, f64)> = amplitudes
        .par_iter()
        .map(|&a| {
            let r12 = |rho: &DensityState| pulse(rho, 1, std::f64::consts::PI * a);
            let without = pi01(&r12(&start)?)?;
            let with = pi01(&r12(&pi01(&start)?)?)?;
            let ev = |s: &DensityState| linalg::trace(&(&readout * s.matrix())).re;
            Ok((ev(&with), ev(&without)))
        })
        .collect::<Result<_>>()?;
    Ok(RabiTraces {
        amplitudes: amplitudes.to_vec(),
        with_pi: rows.iter().map(|r| r.0).collect(),
        without_pi: rows.iter().map(|r| r.1).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LeakageFitMode {
    AmplitudeRatio,
    FullModel,
}

/// `p₁` from the ratio `r` of the without- to with-π₀₁ oscillation amplitudes,
/// `r = (p₁ − p₂)/(p₀ − p₂)`.
pub fn p1_from_ratio(r: f64, p2: f64) -> f64 {
    (r * (1.0 - 2.0 * p2) + p2) / (1.0 + r)
}

/// Fits the full-model traces for `(p₁, M₀, M₁, M₂)` at fixed `p₂`.
fn fit_full_model(traces: &RabiTraces, response: &RabiResponse, p2: f64) -> Result<FitResult> {
    let data: Vec<f64> = traces.with_pi.iter().chain(&traces.without_pi).copied().collect();
    let predict = |p: &[f64]| -> Vec<f64> {
        let t = response.traces([1.0 - p[0] - p2, p[0], p2], [p[1], p[2], p[3]]);
        t.with_pi.into_iter().chain(t.without_pi).collect()
    };
    let p1_init = 0.05_f64.min((1.0 - p2) / 2.0);
    let cols: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let mut m = [0.0; 3];
            m[k] = 1.0;
            let t = response.traces([1.0 - p1_init - p2, p1_init, p2], m);
            t.with_pi.into_iter().chain(t.without_pi).collect()
        })
        .collect();
    let m0 = linear_least_squares(&cols, &data)?;
    let inf = f64::INFINITY;
    fitting::nonlinear_least_squares(
        predict,
        &data,
        None,
        &["p1", "M0", "M1", "M2"],
        &[p1_init, m0[0], m0[1], m0[2]],
        Some(&[(0.0, 1.0 - p2), (-inf, inf), (-inf, inf), (-inf, inf)]),
        FitOptions::default(),
    )
}

/// Leakage population from the two Rabi traces. The `p₂` uncertainty is folded in by
/// Monte-Carlo with the law of total variance.
pub fn fit_leakage_population(
    traces: &RabiTraces,
    model: &ManifoldModel,
    shape: &PulseShape,
    p2: GaussianInput,
    mode: LeakageFitMode,
    n_mc: usize,
    seed: u64,
) -> Result<PopulationEstimate> {
    if traces.with_pi.len() != traces.amplitudes.len() || traces.without_pi.len() != traces.amplitudes.len() {
        return Err(KerrcatError::Fit("traces do not share the amplitude grid".into()));
    }
    let solve: Box<dyn Fn(f64) -> Result<(f64, f64)> + Sync> = match mode {
        LeakageFitMode::AmplitudeRatio => {
            let fw = fit_decaying_sinusoid(&traces.amplitudes, &traces.with_pi)?;
            let fo = fit_decaying_sinusoid(&traces.amplitudes, &traces.without_pi)?;
            let (aw, ao) = (fw.get("a").unwrap(), fo.get("a").unwrap());
            if aw <= 0.0 {
                return Err(KerrcatError::Fit("with-pi trace has no oscillation".into()));
            }
            let sign = (fo.get("phi").unwrap() - fw.get("phi").unwrap()).cos().signum();
            let r = sign * ao / aw;
            let rel = ((fw.err("a").unwrap() / aw).powi(2) + (fo.err("a").unwrap() / ao.max(1e-300)).powi(2)).sqrt();
            let sr = r.abs() * rel;
            Box::new(move |q2| Ok((p1_from_ratio(r, q2), ((1.0 - 3.0 * q2) / (1.0 + r).powi(2)).abs() * sr)))
        }
        LeakageFitMode::FullModel => {
            let response = rabi_response(&model.with_rates(model.rates.without_heating()), shape, &traces.amplitudes)?;
            Box::new(move |q2| {
                let f = fit_full_model(traces, &response, q2)?;
                Ok((f.get("p1").unwrap(), f.err("p1").unwrap()))
            })
        }
    };
    let (p1, _) = solve(p2.mean)?;
    let mc = monte_carlo_propagate(
        |x| {
            let (q1, s1) = solve(x[0])?;
            Ok(vec![(1.0 - q1 - x[0], s1), (q1, s1)])
        },
        &[p2],
        n_mc,
        seed,
    )?;
    let est = PopulationEstimate {
        p0: 1.0 - p1 - p2.mean,
        p1,
        p2: p2.mean,
        sigma0: mc.outputs[0].sigma(),
        sigma1: mc.outputs[1].sigma(),
        sigma2: p2.sigma,
    };
    est.validate()?;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSettings {
    pub dw: f64,
    pub p2: GaussianInput,
    pub n_mc: usize,
    pub seed: u64,
    pub shape: PulseShape,
    pub amplitudes: Vec<f64>,
}

impl Default for RobustnessSettings {
    fn default() -> Self {
        Self {
            dw: TWO_PI * 200e3,
            p2: GaussianInput::new(0.01, 0.003),
            n_mc: 200,
            seed: 7,
            shape: PulseShape::default(),
            amplitudes: (0..41).map(|k| k as f64 * 0.05).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub true_rates: DecoherenceRates,
    pub fitted_rates: DecoherenceRates,
    /// Fitted over true minus one, ordered `κ₁⁰¹, κφ⁰¹, κ₁¹², κφ¹²`.
    pub relative_errors: [f64; 4],
    pub true_populations: [f64; 3],
    pub by_ratio: PopulationEstimate,
    pub by_model: PopulationEstimate,
    pub fits: Vec<FitResult>,
}

fn grid(end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect()
}

/// Synthetic `T₁`/Ramsey data from `rates` (excitation included), refitted with the
/// heating-free closed forms; then both `p₁` estimators on Rabi traces from the
/// steady state, using the fitted rates.
pub fn excitation_robustness_study(
    rates: &DecoherenceRates,
    contrasts: &ReadoutContrasts,
    settings: &RobustnessSettings,
) -> Result<RobustnessReport> {
    use CoherenceExperiment::*;
    rates.validate()?;
    let truth = ManifoldModel::ideal(*rates);
    let m = [contrasts.m0, contrasts.m1, contrasts.m2];
    let dw = settings.dw;
    let inf = f64::INFINITY;
    let free = (-inf, inf);
    let opts = FitOptions::default();

    let t1 = grid(300e-6, 151);
    let y1 = simulate_experiment(&truth, T1_01, m, dw, &t1)?;
    let guess = fit_exp(&t1, &y1)?;
    let (a, tau, c0) = (guess.params[0], guess.params[1], guess.params[2]);
    let f1 = fitting::nonlinear_least_squares(
        |p| t1.iter().map(|&t| p[1] * (-p[0] * t).exp() + p[2] * (1.0 - (-p[0] * t).exp())).collect(),
        &y1,
        None,
        &["k1_01", "M1", "M0"],
        &[1.0 / tau, a + c0, c0],
        Some(&[(0.0, inf), free, free]),
        opts,
    )?;
    let k01 = f1.params[0];

    let t2 = grid(60e-6, 301);
    let y2 = simulate_experiment(&truth, Tphi01, m, dw, &t2)?;
    let s2 = fit_decaying_sinusoid(&t2, &y2)?;
    let ramsey01 = |p: &[f64]| -> Vec<f64> {
        let g = k01 / 2.0 + p[0];
        t2.iter().map(|&t| 0.5 * (p[1] + p[2]) + 0.5 * (p[2] - p[1]) * (dw * t + p[3]).cos() * (-g * t).exp()).collect()
    };
    let (sa, sc) = (s2.get("a").unwrap(), s2.get("c").unwrap());
    let f2 = fitting::nonlinear_least_squares(
        ramsey01,
        &y2,
        None,
        &["kphi_01", "M0", "M1", "phi"],
        &[(s2.get("gamma").unwrap() - k01 / 2.0).max(1e3), sc - sa, sc + sa, s2.get("phi").unwrap()],
        Some(&[(0.0, inf), free, free, free]),
        opts,
    )?;
    let kp01 = f2.params[0];

    let t3 = grid(300e-6, 301);
    let y3 = simulate_experiment(&truth, T1_12, m, dw, &t3)?;
    let g3 = fit_exp(&t3, &y3)?;
    let k12_init = 1.0 / g3.params[1];
    // After π₀₁ the contrasts of manifolds 0 and 1 trade places in the cascade model.
    let cascade_cols = |k12: f64| -> Vec<Vec<f64>> {
        (0..3)
            .map(|k| {
                let mut p = [k01, k12, 0.0, 0.0, 0.0];
                p[2 + k] = 1.0;
                double_exp_model(&t3, &p)
            })
            .collect()
    };
    let lin = linear_least_squares(&cascade_cols(k12_init), &y3)?;
    let f3 = fitting::nonlinear_least_squares(
        |p| double_exp_model(&t3, &[k01, p[0], p[2], p[1], p[3]]),
        &y3,
        None,
        &["k1_12", "M0", "M1", "M2"],
        &[k12_init, lin[1], lin[0], lin[2]],
        Some(&[(0.0, inf), free, free, free]),
        opts,
    )?;
    let k12 = f3.params[0];

    let t4 = grid(20e-6, 301);
    let y4 = simulate_experiment(&truth, Tphi12, m, dw, &t4)?;
    let s4 = fit_decaying_sinusoid(&t4, &y4)?;
    let base_gamma = k01 / 2.0 + kp01 + k12 / 2.0;
    let ramsey12 = |p: &[f64]| -> Vec<f64> {
        t4.iter()
            .map(|&t| {
                let r22 = 0.25 * (-k12 * t).exp();
                let r11 = 0.25 * (-k01 * t).exp() + 0.25 * fitting::cascade_factor(k01, k12, t);
                let r00 = 0.5 - r11 - r22;
                let env = (-(base_gamma + p[0]) * t).exp();
                2.0 * p[2] * r00 + (p[1] + p[3]) * (r11 + r22) + 0.5 * (p[3] - p[1]) * (dw * t + p[4]).cos() * env
            })
            .collect()
    };
    let kp12_init = (s4.get("gamma").unwrap() - base_gamma).max(1e3);
    let phi_init = s4.get("phi").unwrap();
    let cols4: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let mut p = [kp12_init, 0.0, 0.0, 0.0, phi_init];
            p[1 + k] = 1.0;
            ramsey12(&p)
        })
        .collect();
    let lin4 = linear_least_squares(&cols4, &y4)?;
    let f4 = fitting::nonlinear_least_squares(
        ramsey12,
        &y4,
        None,
        &["kphi_12", "M0", "M1", "M2", "phi"],
        &[kp12_init, lin4[0], lin4[1], lin4[2], phi_init],
        Some(&[(0.0, inf), free, free, free, free]),
        opts,
    )?;
    let kp12 = f4.params[0];

    let fitted = DecoherenceRates::new(k01, k12, kp01, kp12);
    let relative_errors = [
        k01 / rates.k1_01 - 1.0,
        kp01 / rates.kphi_01 - 1.0,
        k12 / rates.k1_12 - 1.0,
        kp12 / rates.kphi_12 - 1.0,
    ];

    let pops = truth.steady_populations()?;
    let traces = rabi_response(&truth, &settings.shape, &settings.amplitudes)?.traces(pops, m);
    let fit_model = ManifoldModel::ideal(fitted);
    let est = |mode| fit_leakage_population(&traces, &fit_model, &settings.shape, settings.p2, mode, settings.n_mc, settings.seed);
    Ok(RobustnessReport {
        true_rates: *rates,
        fitted_rates: fitted,
        relative_errors,
        true_populations: pops,
        by_ratio: est(LeakageFitMode::AmplitudeRatio)?,
        by_model: est(LeakageFitMode::FullModel)?,
        fits: vec![f1, f2, f3, f4],
    })
}
