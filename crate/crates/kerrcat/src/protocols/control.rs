use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_schrodinger, DriveSum};
use crate::error::{KerrcatError, Result};
use crate::hilbert::build_fock_operators;
use crate::linalg::{self, c, re, CMat, C64};
use crate::spectrum::{build_spectrum, ManifoldSpectrum, OscillatorParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RampKind {
    GaussianRise,
    /// Gaussian edges of `2.5σ` at both ends around a flat hold.
    FlatTop,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampProfile {
    pub kind: RampKind,
    pub duration: f64,
    pub sigma: f64,
    pub start_value: f64,
    pub end_value: f64,
}

impl RampProfile {
    /// Gaussian rise from zero that reaches `end_value` at `duration`.
    pub fn gaussian_rise(duration: f64, sigma: f64, end_value: f64) -> Self {
        Self { kind: RampKind::GaussianRise, duration, sigma, start_value: 0.0, end_value }
    }

    pub fn constant(value: f64) -> Self {
        Self { kind: RampKind::Constant, duration: f64::MIN_POSITIVE, sigma: 0.0, start_value: value, end_value: value }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(KerrcatError::param("duration", "must be positive"));
        }
        if self.kind != RampKind::Constant && !(self.sigma > 0.0) {
            return Err(KerrcatError::param("sigma", "must be positive for Gaussian ramps"));
        }
        if self.kind == RampKind::FlatTop && 5.0 * self.sigma > self.duration {
            return Err(KerrcatError::param("sigma", "flat-top edges longer than the pulse"));
        }
        Ok(())
    }

    /// Normalized so the rise starts exactly at `start_value` and lands on `end_value`.
    fn rise(&self, t: f64, t_peak: f64, span: f64) -> f64 {
        let f0 = (-span * span / (2.0 * self.sigma * self.sigma)).exp();
        let u = t - t_peak;
        let f = ((-u * u / (2.0 * self.sigma * self.sigma)).exp() - f0) / (1.0 - f0);
        self.start_value + (self.end_value - self.start_value) * f
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            RampKind::Constant => self.end_value,
            RampKind::GaussianRise => {
                if t >= self.duration {
                    self.end_value
                } else if t <= 0.0 {
                    self.start_value
                } else {
                    self.rise(t, self.duration, self.duration)
                }
            }
            RampKind::FlatTop => {
                let edge = 2.5 * self.sigma;
                if t <= 0.0 || t >= self.duration {
                    self.start_value
                } else if t < edge {
                    self.rise(t, edge, edge)
                } else if t > self.duration - edge {
                    self.rise(t, self.duration - edge, edge)
                } else {
                    self.end_value
                }
            }
        }
    }

    /// Time the profile needs; constants take none.
    pub fn span(&self) -> f64 {
        if self.kind == RampKind::Constant {
            0.0
        } else {
            self.duration
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampResult {
    pub fidelity: f64,
    pub duration: f64,
    pub steps_dt: f64,
    pub final_state: Vec<[f64; 2]>,
}

/// Default ε₂ ramp: 1 µs Gaussian rise with σ = 200 ns.
pub fn default_eps2_ramp(target: &OscillatorParams) -> RampProfile {
    RampProfile::gaussian_rise(1e-6, 200e-9, target.eps2)
}

/// Default Δ ramp: 5.6 µs Gaussian rise with σ = 1.12 µs.
pub fn default_delta_ramp(target: &OscillatorParams) -> RampProfile {
    RampProfile::gaussian_rise(5.6e-6, 1.12e-6, target.delta)
}

/// Lossless ramp from vacuum; returns the population of manifold 0 of the target spectrum.
/// Without the Δ ramp the detuning sits at its target value from the start.
pub fn initialization_ramp(
    target: &OscillatorParams,
    eps2_ramp: &RampProfile,
    delta_ramp: &RampProfile,
    with_detuning_ramp: bool,
    fock_dim: usize,
) -> Result<RampResult> {
    target.validate()?;
    eps2_ramp.validate()?;
    let spec = build_spectrum(target, fock_dim)?;
    let ops = build_fock_operators(fock_dim)?;
    let a = &ops.annihilation;
    let ad = linalg::dagger(a);
    let n = &ad * a;
    let a2 = a * a;
    let ad2 = &ad * &ad;
    let k2 = &ad2 * &a2;
    let sq = &a2 + &ad2;
    let delta_profile = if with_detuning_ramp {
        delta_ramp.validate()?;
        *delta_ramp
    } else {
        RampProfile::constant(target.delta)
    };
    let t_end = eps2_ramp.span().max(delta_profile.span());
    let p = *target;
    let detuning = move |t: f64| {
        let at = OscillatorParams { eps2: eps2_ramp.value(t), delta: delta_profile.value(t), ..p };
        re(at.effective_detuning())
    };
    let e2 = *eps2_ramp;
    let kerr = target.k;
    let h = DriveSum::new(fock_dim)
        .term(&n, detuning)
        .term(&k2, move |_| re(-kerr))
        .term(&sq, move |t| re(e2.value(t)));
    let bound = (0..=20).map(|i| h.spectral_bound(t_end * i as f64 / 20.0)).fold(0.0, f64::max);
    let dt = 1.0 / (50.0 * bound);
    let mut psi0 = vec![c(0.0, 0.0); fock_dim];
    psi0[0] = re(1.0);
    let psi = evolve_schrodinger(&h, &psi0, t_end, dt)?;
    Ok(RampResult {
        fidelity: manifold_zero_overlap(&spec, &psi)?,
        duration: t_end,
        steps_dt: dt,
        final_state: psi.iter().map(|z| [z.re, z.im]).collect(),
    })
}

fn manifold_zero_overlap(spec: &ManifoldSpectrum, psi: &[C64]) -> Result<f64> {
    let plus = spec.plus(0)?;
    let minus = spec.minus(0)?;
    Ok(linalg::inner(&plus, psi).norm_sqr() + linalg::inner(&minus, psi).norm_sqr())
}

/// `(Tr √(√σ ρ √σ))²`
pub fn uhlmann_fidelity(rho: &CMat, sigma: &CMat) -> Result<f64> {
    let s = linalg::psd_sqrt(sigma)?;
    let inner = &(&s * rho) * &s;
    let root = linalg::psd_sqrt(&inner)?;
    Ok(linalg::trace(&root).re.powi(2))
}

/// Evolve `ρ` for `τ` under `−K a†²a²` with `κ₁ D[a] + κφ D[a†a]`.
///
/// Both channels keep the offset `d = n − m` of `ρ_mn`, so each diagonal band is
/// propagated on its own with a bidiagonal generator.
pub fn kerr_evolve(rho0: &CMat, k: f64, kappa1: f64, kappa_phi: f64, tau: f64) -> CMat {
    let dim = rho0.nrows();
    let energy = |m: usize| -k * (m as f64) * (m as f64 - 1.0);
    let mut out = linalg::zeros(dim, dim);
    for d in 0..dim as isize * 2 - 1 {
        let d = d - (dim as isize - 1);
        let (r0, c0) = if d >= 0 { (0usize, d as usize) } else { ((-d) as usize, 0usize) };
        let len = dim - d.unsigned_abs();
        let mut gen = linalg::zeros(len, len);
        for j in 0..len {
            let (m, n) = (r0 + j, c0 + j);
            let (mf, nf) = (m as f64, n as f64);
            gen[(j, j)] = c(-kappa1 * (mf + nf) / 2.0 - kappa_phi * (mf - nf).powi(2) / 2.0, -(energy(m) - energy(n)));
            if j + 1 < len {
                gen[(j, j + 1)] = re(kappa1 * ((mf + 1.0) * (nf + 1.0)).sqrt());
            }
        }
        let prop = linalg::expm(&linalg::scale_real(&gen, tau));
        for j in 0..len {
            let mut acc = c(0.0, 0.0);
            for l in j..len {
                acc += prop[(j, l)] * rho0[(r0 + l, c0 + l)];
            }
            out[(r0 + j, c0 + j)] = acc;
        }
    }
    out
}

/// Uhlmann fidelity between the lossy and the ideal Kerr evolution of `|+Z⟩`.
pub fn kerr_gate_fidelity(k: f64, kappa1: f64, kappa_phi: f64, tau: f64, spec: &ManifoldSpectrum) -> Result<f64> {
    if !(kappa1 >= 0.0 && kappa_phi >= 0.0 && tau >= 0.0) {
        return Err(KerrcatError::param("gate", "rates and duration must be non-negative"));
    }
    let plus = spec.plus(0)?;
    let minus = spec.minus(0)?;
    let pz: Vec<C64> = plus.iter().zip(&minus).map(|(p, m)| (p + m) * std::f64::consts::FRAC_1_SQRT_2).collect();
    let rho0 = linalg::projector(&pz);
    let lossy = kerr_evolve(&rho0, k, kappa1, kappa_phi, tau);
    let ideal = kerr_evolve(&rho0, k, 0.0, 0.0, tau);
    Ok(uhlmann_fidelity(&lossy, &ideal)?.min(1.0))
}

/// `(1 − e^{−γτ})/2`
pub fn z_gate_error(gamma: f64, tau: f64) -> f64 {
    (1.0 - (-gamma * tau).exp()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZroMetrics {
    pub fidelity: f64,
    pub qnd: f64,
    pub p_plus_given_minus: f64,
    pub p_minus_given_plus: f64,
    pub shots_plus: usize,
    pub shots_minus: usize,
}

/// Fidelity and QND-ness from paired readouts; outcomes above `threshold` count as `+Z`,
/// and conditionals are on the first outcome.
pub fn zro_fidelity_qnd(first: &[f64], second: &[f64], threshold: f64) -> Result<ZroMetrics> {
    if first.len() != second.len() {
        return Err(KerrcatError::InvalidShape(format!("{} vs {} shots", first.len(), second.len())));
    }
    let (mut pp, mut pm, mut mp, mut mm) = (0usize, 0usize, 0usize, 0usize);
    for (&a, &b) in first.iter().zip(second) {
        match (a > threshold, b > threshold) {
            (true, true) => pp += 1,
            (true, false) => pm += 1,
            (false, true) => mp += 1,
            (false, false) => mm += 1,
        }
    }
    let np = pp + pm;
    let nm = mp + mm;
    if np == 0 {
        return Err(KerrcatError::UndefinedConditional("+Z".into()));
    }
    if nm == 0 {
        return Err(KerrcatError::UndefinedConditional("-Z".into()));
    }
    let p_pp = pp as f64 / np as f64;
    let p_mp = pm as f64 / np as f64;
    let p_pm = mp as f64 / nm as f64;
    let p_mm = mm as f64 / nm as f64;
    Ok(ZroMetrics {
        fidelity: 1.0 - p_pm - p_mp,
        qnd: (p_pp + p_mm) / 2.0,
        p_plus_given_minus: p_pm,
        p_minus_given_plus: p_mp,
        shots_plus: np,
        shots_minus: nm,
    })
}

/// Paired shots from two Gaussian clusters at `±separation/2`. Each shot's state flips
/// between the two readouts with probability `flip`.
pub fn synthetic_zro_shots(n: usize, separation: f64, sigma: f64, flip: f64, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let noise = Normal::new(0.0, sigma).map_err(|e| KerrcatError::param("sigma", e.to_string()))?;
    let flipper = Bernoulli::new(flip).map_err(|e| KerrcatError::param("flip", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        first.push(s * separation / 2.0 + noise.sample(&mut rng));
        let s2 = if flipper.sample(&mut rng) { -s } else { s };
        second.push(s2 * separation / 2.0 + noise.sample(&mut rng));
    }
    Ok((first, second))
}

