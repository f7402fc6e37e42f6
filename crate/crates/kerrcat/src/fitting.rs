//! Nonlinear least squares, canonical decay models and Monte-Carlo error propagation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KerrcatError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub at_bound: Vec<bool>,
    /// Values used by the model but held fixed.
    pub fixed: Vec<(String, f64)>,
    pub iterations: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.params[k])
    }

    pub fn err(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|k| self.std_errors[k])
    }

    pub fn with_fixed(mut self, fixed: &[(&str, f64)]) -> Self {
        self.fixed = fixed.iter().map(|(n, v)| (n.to_string(), *v)).collect();
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
    pub rel_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, ftol: 1e-14, xtol: 1e-12, rel_step: 1e-6 }
    }
}

fn fit_err(msg: impl Into<String>) -> KerrcatError {
    KerrcatError::Fit(msg.into())
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub(crate) fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= 1e-14 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn invert_small(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve_small(a.to_vec(), e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// Ordinary least squares `y ≈ Σ_k β_k·columns[k]` through the normal equations.
pub fn linear_least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let k = columns.len();
    if columns.iter().any(|c| c.len() != y.len()) {
        return Err(fit_err("design columns differ in length from data"));
    }
    let a: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| columns[i].iter().zip(&columns[j]).map(|(x, z)| x * z).sum()).collect())
        .collect();
    let b: Vec<f64> = columns.iter().map(|c| c.iter().zip(y).map(|(x, z)| x * z).sum()).collect();
    solve_small(a, b).ok_or_else(|| fit_err("singular-Jacobian: collinear design columns"))
}

/// Damped Gauss–Newton (Levenberg–Marquardt) with central-difference Jacobians and
/// box bounds. Parameters pinned at a bound by the gradient are reported in `at_bound`
/// and excluded from the covariance.
pub fn nonlinear_least_squares<F>(
    model: F,
    data: &[f64],
    sigma: Option<&[f64]>,
    names: &[&str],
    init: &[f64],
    bounds: Option<&[(f64, f64)]>,
    opts: FitOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let np = init.len();
    let nd = data.len();
    if names.len() != np {
        return Err(fit_err("parameter names and initial values differ in length"));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(fit_err("data contain non-finite values"));
    }
    if nd < np {
        return Err(fit_err(format!("{nd} data points cannot determine {np} parameters")));
    }
    let w: Vec<f64> = match sigma {
        Some(s) if s.len() == nd => s.iter().map(|x| 1.0 / x).collect(),
        Some(_) => return Err(fit_err("sigma length differs from data")),
        None => vec![1.0; nd],
    };
    let bnd: Vec<(f64, f64)> = match bounds {
        Some(b) if b.len() == np => b.to_vec(),
        Some(_) => return Err(fit_err("bounds length differs from parameters")),
        None => vec![(f64::NEG_INFINITY, f64::INFINITY); np],
    };
    for (k, (&p, &(lo, hi))) in init.iter().zip(&bnd).enumerate() {
        if !(p >= lo && p <= hi) {
            return Err(fit_err(format!("initial `{}` = {p} outside bounds [{lo}, {hi}]", names[k])));
        }
    }
    let typ: Vec<f64> = init.iter().map(|p| p.abs().max(1e-3)).collect();
    let resid = |p: &[f64]| -> Option<Vec<f64>> {
        let m = model(p);
        if m.len() != nd || m.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some(m.iter().zip(data).zip(&w).map(|((mi, di), wi)| (mi - di) * wi).collect())
    };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    // Exact data: once residuals reach roundoff the relative test never settles.
    let floor = (1e-12 * data.iter().zip(&w).map(|(y, wi)| (y * wi).powi(2)).sum::<f64>().sqrt()).powi(2);
    let jacobian = |p: &[f64]| -> Option<Vec<Vec<f64>>> {
        let mut cols = Vec::with_capacity(np);
        for j in 0..np {
            let h = opts.rel_step * p[j].abs().max(typ[j]);
            let (lo, hi) = bnd[j];
            let (mut up, mut dn) = (p.to_vec(), p.to_vec());
            let (xu, xd) = ((p[j] + h).min(hi), (p[j] - h).max(lo));
            up[j] = xu;
            dn[j] = xd;
            let (ru, rd) = (resid(&up)?, resid(&dn)?);
            let span = xu - xd;
            if span <= 0.0 {
                return None;
            }
            cols.push(ru.iter().zip(&rd).map(|(a, b)| (a - b) / span).collect::<Vec<f64>>());
        }
        Some(cols)
    };

    let mut p = init.to_vec();
    let mut r = resid(&p).ok_or_else(|| fit_err("model is non-finite at the initial parameters"))?;
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = jacobian(&p).ok_or_else(|| fit_err("Jacobian is non-finite at the initial parameters"))?;
    let col_norms = |jac: &[Vec<f64>]| jac.iter().map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt()).collect::<Vec<_>>();
    let initial_norms = col_norms(&jac);
    let max_norm = initial_norms.iter().cloned().fold(0.0, f64::max);
    if max_norm == 0.0 || initial_norms.iter().any(|&n| n <= 1e-12 * max_norm) {
        let k = initial_norms.iter().position(|&n| n <= 1e-12 * max_norm).unwrap_or(0);
        return Err(fit_err(format!("singular-Jacobian: parameter `{}` does not affect the model", names[k])));
    }

    while iterations < opts.max_iter {
        iterations += 1;
        let grad: Vec<f64> = jac.iter().map(|col| col.iter().zip(&r).map(|(a, b)| a * b).sum()).collect();
        // Freeze parameters sitting on a bound whose descent direction points outward.
        let free: Vec<usize> = (0..np)
            .filter(|&j| {
                let (lo, hi) = bnd[j];
                !((p[j] <= lo && grad[j] > 0.0) || (p[j] >= hi && grad[j] < 0.0))
            })
            .collect();
        if free.is_empty() {
            converged = true;
            break;
        }
        let jtj: Vec<Vec<f64>> = free
            .iter()
            .map(|&a| free.iter().map(|&b| jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum()).collect())
            .collect();
        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..40 {
            let mut m = jtj.clone();
            for (i, row) in m.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-300);
            }
            let rhs: Vec<f64> = free.iter().map(|&j| -grad[j]).collect();
            let Some(step) = solve_small(m, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p.clone();
            for (k, &j) in free.iter().enumerate() {
                trial[j] = (p[j] + step[k]).clamp(bnd[j].0, bnd[j].1);
            }
            small_step = free.iter().all(|&j| (trial[j] - p[j]).abs() <= opts.xtol * (p[j].abs() + opts.xtol));
            if let Some(rt) = resid(&trial) {
                let ct = cost(&rt);
                if ct <= c {
                    let rel = (c - ct) / c.max(1e-300);
                    p = trial;
                    r = rt;
                    let improved = c - ct;
                    c = ct;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if rel < opts.ftol || improved == 0.0 || small_step || c <= floor {
                        converged = true;
                    }
                    break;
                }
            }
            if small_step {
                break;
            }
            lambda *= 10.0;
        }
        if converged || (!accepted && small_step) {
            converged = true;
            break;
        }
        if !accepted {
            converged = true;
            break;
        }
        jac = jacobian(&p).ok_or_else(|| fit_err("Jacobian became non-finite"))?;
    }
    if !converged {
        return Err(fit_err(format!(
            "max-iterations: {} iterations, residual norm {:.4e}",
            opts.max_iter,
            c.sqrt()
        )));
    }
    let grad: Vec<f64> = jac.iter().map(|col| col.iter().zip(&r).map(|(a, b)| a * b).sum()).collect();
    let at_bound: Vec<bool> = (0..np)
        .map(|j| {
            let (lo, hi) = bnd[j];
            (p[j] <= lo && grad[j] >= 0.0) || (p[j] >= hi && grad[j] <= 0.0)
        })
        .collect();
    let free: Vec<usize> = (0..np).filter(|&j| !at_bound[j]).collect();
    let jtj: Vec<Vec<f64>> = free
        .iter()
        .map(|&a| free.iter().map(|&b| jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum()).collect())
        .collect();
    let inv = if free.is_empty() {
        Some(Vec::new())
    } else {
        invert_small(&jtj)
    };
    let Some(inv) = inv else {
        return Err(fit_err("singular-Jacobian: covariance matrix is not invertible at the optimum"));
    };
    let s2 = if sigma.is_some() {
        1.0
    } else if nd > free.len() {
        c / (nd - free.len()) as f64
    } else {
        0.0
    };
    let mut cov = vec![vec![0.0; np]; np];
    for (a, &ia) in free.iter().enumerate() {
        for (b, &ib) in free.iter().enumerate() {
            cov[ia][ib] = inv[a][b] * s2;
        }
    }
    let std_errors = (0..np).map(|j| cov[j][j].max(0.0).sqrt()).collect();
    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        params: p,
        std_errors,
        covariance: cov,
        residual_norm: c.sqrt(),
        converged,
        at_bound,
        fixed: Vec::new(),
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FitKind {
    Exp,
    DoubleExp,
    Lorentzian,
    DecayingSinusoid,
}

/// `a·e^{−t/τ} + c`
pub fn exp_model(t: &[f64], p: &[f64]) -> Vec<f64> {
    t.iter().map(|&x| p[0] * (-x / p[1]).exp() + p[2]).collect()
}

/// `κ₁₂·t·e^{−κ₁₂t}·φ((κ₀₁−κ₁₂)t)` with `φ(z) = (1 − e^{−z})/z`; equals
/// `κ₁₂/(κ₀₁−κ₁₂)·(e^{−κ₁₂t} − e^{−κ₀₁t})` and stays finite as `κ₀₁ → κ₁₂`.
pub fn cascade_factor(k01: f64, k12: f64, t: f64) -> f64 {
    let z = (k01 - k12) * t;
    if z.abs() < 1e-8 {
        return k12 * t * (-k12 * t).exp() * (1.0 - z / 2.0);
    }
    // Factor out the slower exponential so neither branch overflows.
    if z > 0.0 {
        k12 * t * (-k12 * t).exp() * (-(-z).exp_m1() / z)
    } else {
        k12 * t * (-k01 * t).exp() * (z.exp_m1() / z)
    }
}

/// Cascade decay `2 → 1 → 0` read out with contrasts: params `(κ₀₁, κ₁₂, M₀, M₁, M₂)`.
pub fn double_exp_model(t: &[f64], p: &[f64]) -> Vec<f64> {
    let (k01, k12, m0, m1, m2) = (p[0], p[1], p[2], p[3], p[4]);
    t.iter()
        .map(|&x| {
            let e = (-k12 * x).exp();
            let cx = cascade_factor(k01, k12, x);
            m2 * e + m0 * (1.0 - e - cx) + m1 * cx
        })
        .collect()
}

/// `a·w²/((x−x₀)² + w²) + c`
pub fn lorentzian_model(x: &[f64], p: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| p[0] * p[2] * p[2] / ((v - p[1]).powi(2) + p[2] * p[2]) + p[3]).collect()
}

/// `a·e^{−γt}·cos(Ωt + φ) + c`
pub fn decaying_sinusoid_model(t: &[f64], p: &[f64]) -> Vec<f64> {
    t.iter().map(|&x| p[0] * (-p[1] * x).exp() * (p[2] * x + p[3]).cos() + p[4]).collect()
}

fn check_points(x: &[f64], y: &[f64], nparams: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(fit_err("x and y differ in length"));
    }
    if x.len() < 2 * nparams {
        return Err(fit_err(format!("need at least {} points, have {}", 2 * nparams, x.len())));
    }
    Ok(())
}

fn tail_mean(y: &[f64]) -> f64 {
    let k = (y.len() / 10).max(1);
    y[y.len() - k..].iter().sum::<f64>() / k as f64
}

/// Exponential fit; τ guessed from the first 1/e crossing of `|y − c|`.
pub fn fit_exp(x: &[f64], y: &[f64]) -> Result<FitResult> {
    check_points(x, y, 3)?;
    let c0 = tail_mean(y);
    let a0 = y[0] - c0;
    let span = x[x.len() - 1] - x[0];
    let tau0 = x
        .iter()
        .zip(y)
        .find(|(_, &v)| (v - c0).abs() <= a0.abs() / std::f64::consts::E)
        .map(|(&t, _)| (t - x[0]).max(span / x.len() as f64))
        .unwrap_or(span / 3.0);
    nonlinear_least_squares(
        |p| exp_model(x, p),
        y,
        None,
        &["a", "tau", "c"],
        &[a0, tau0, c0],
        Some(&[(f64::NEG_INFINITY, f64::INFINITY), (1e-300, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)]),
        FitOptions::default(),
    )
}

/// Cascade fit; without an explicit start the rates come from the early slope and
/// the contrasts from the endpoints.
pub fn fit_double_exp(x: &[f64], y: &[f64], init: Option<[f64; 5]>) -> Result<FitResult> {
    check_points(x, y, 5)?;
    let start = init.unwrap_or_else(|| {
        let m2 = y[0];
        let m0 = tail_mean(y);
        let (imax, _) = y.iter().enumerate().fold((0, 0.0_f64), |acc, (i, v)| {
            let d = (v - 0.5 * (m0 + m2)).abs();
            if d > acc.1 { (i, d) } else { acc }
        });
        let span = x[x.len() - 1] - x[0];
        let k = 3.0 / span.max(1e-300);
        [k, k * 2.0, m0, y[imax], m2]
    });
    let inf = f64::INFINITY;
    nonlinear_least_squares(
        |p| double_exp_model(x, p),
        y,
        None,
        &["k01", "k12", "M0", "M1", "M2"],
        &start,
        Some(&[(0.0, inf), (0.0, inf), (-inf, inf), (-inf, inf), (-inf, inf)]),
        FitOptions::default(),
    )
}

/// Lorentzian fit: offset from the edge median, centre at the largest excursion,
/// width from the half-maximum crossing.
pub fn fit_lorentzian(x: &[f64], y: &[f64]) -> Result<FitResult> {
    check_points(x, y, 4)?;
    let mut edges = vec![y[0], y[1], y[y.len() - 1], y[y.len() - 2]];
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c0 = 0.5 * (edges[1] + edges[2]);
    let (ipk, _) = y.iter().enumerate().fold((0, -1.0), |acc, (i, v)| if (v - c0).abs() > acc.1 { (i, (v - c0).abs()) } else { acc });
    let a0 = y[ipk] - c0;
    let half = 0.5 * a0.abs();
    let mut right = ipk;
    while right + 1 < y.len() && (y[right] - c0).abs() > half {
        right += 1;
    }
    let mut left = ipk;
    while left > 0 && (y[left] - c0).abs() > half {
        left -= 1;
    }
    let step = (x[x.len() - 1] - x[0]).abs() / (x.len() - 1) as f64;
    let w0 = (0.5 * (x[right] - x[left]).abs()).max(step);
    nonlinear_least_squares(
        |p| lorentzian_model(x, p),
        y,
        None,
        &["a", "x0", "w", "c"],
        &[a0, x[ipk], w0, c0],
        Some(&[
            (f64::NEG_INFINITY, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
            (1e-300, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
        ]),
        FitOptions::default(),
    )
}

/// Linear least squares of `y ≈ A cos Ωt + B sin Ωt + c`; returns `(A, B, c, rss)`.
fn sinusoid_linear(x: &[f64], y: &[f64], omega: f64, gamma: f64) -> Option<(f64, f64, f64, f64)> {
    let basis = |t: f64| {
        let e = (-gamma * t).exp();
        [e * (omega * t).cos(), e * (omega * t).sin(), 1.0]
    };
    let mut ata = vec![vec![0.0; 3]; 3];
    let mut aty = vec![0.0; 3];
    for (&t, &v) in x.iter().zip(y) {
        let b = basis(t);
        for i in 0..3 {
            aty[i] += b[i] * v;
            for j in 0..3 {
                ata[i][j] += b[i] * b[j];
            }
        }
    }
    let s = solve_small(ata, aty)?;
    let rss = x.iter().zip(y).map(|(&t, &v)| {
        let b = basis(t);
        (s[0] * b[0] + s[1] * b[1] + s[2] - v).powi(2)
    }).sum();
    Some((s[0], s[1], s[2], rss))
}

/// Decaying-sinusoid fit. Ω and γ start from a grid search of the linear
/// subproblem; the amplitude is kept non-negative so the phase carries the sign.
pub fn fit_decaying_sinusoid(x: &[f64], y: &[f64]) -> Result<FitResult> {
    check_points(x, y, 5)?;
    let span = (x[x.len() - 1] - x[0]).abs();
    let step = span / (x.len() - 1) as f64;
    let nyquist = std::f64::consts::PI / step;
    let omega_min = std::f64::consts::PI / span;
    let mut best: Option<(f64, f64, (f64, f64, f64, f64))> = None;
    let n_omega = 400;
    for i in 0..n_omega {
        let om = omega_min * (nyquist / omega_min).powf(i as f64 / (n_omega - 1) as f64);
        for g in [0.0, 0.5 / span, 1.0 / span, 2.0 / span, 4.0 / span] {
            if let Some(sol) = sinusoid_linear(x, y, om, g) {
                if best.as_ref().map_or(true, |b| sol.3 < b.2 .3) {
                    best = Some((om, g, sol));
                }
            }
        }
    }
    let (om, g, (a, b, c0, _)) = best.ok_or_else(|| fit_err("no sinusoidal component found"))?;
    let amp = (a * a + b * b).sqrt();
    if amp == 0.0 {
        return Err(fit_err("singular-Jacobian: flat signal"));
    }
    let phi = (-b).atan2(a);
    let inf = f64::INFINITY;
    nonlinear_least_squares(
        |p| decaying_sinusoid_model(x, p),
        y,
        None,
        &["a", "gamma", "omega", "phi", "c"],
        &[amp, g, om, phi, c0],
        Some(&[(0.0, inf), (0.0, inf), (0.0, inf), (-inf, inf), (-inf, inf)]),
        FitOptions::default(),
    )
}

pub fn canonical_fit(kind: FitKind, x: &[f64], y: &[f64]) -> Result<FitResult> {
    match kind {
        FitKind::Exp => fit_exp(x, y),
        FitKind::DoubleExp => fit_double_exp(x, y, None),
        FitKind::Lorentzian => fit_lorentzian(x, y),
        FitKind::DecayingSinusoid => fit_decaying_sinusoid(x, y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianInput {
    pub mean: f64,
    pub sigma: f64,
}

impl GaussianInput {
    pub fn new(mean: f64, sigma: f64) -> Self {
        Self { mean, sigma }
    }
}

/// Per-output summary: `total_variance = expected_conditional_variance + variance_of_means`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McComponent {
    pub mean: f64,
    pub total_variance: f64,
    pub expected_conditional_variance: f64,
    pub variance_of_means: f64,
}

impl McComponent {
    pub fn sigma(&self) -> f64 {
        self.total_variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub samples: usize,
    pub failed: usize,
    pub seed: u64,
    pub outputs: Vec<McComponent>,
}

pub const MC_BATCH: usize = 256;

/// Seeded Monte-Carlo propagation of Gaussian inputs through `solver`, which returns
/// each output's value and its conditional standard deviation.
///
/// Batch `b` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to stream `b`, so
/// the result does not depend on how batches are scheduled across threads.
pub fn monte_carlo_propagate<F>(solver: F, inputs: &[GaussianInput], n: usize, seed: u64) -> Result<MonteCarloSummary>
where
    F: Fn(&[f64]) -> Result<Vec<(f64, f64)>> + Sync,
{
    if n < 100 {
        return Err(KerrcatError::param("n", "Monte-Carlo needs at least 100 samples"));
    }
    let dists: Vec<Normal<f64>> = inputs
        .iter()
        .map(|g| Normal::new(g.mean, g.sigma.max(0.0)).map_err(|e| KerrcatError::param("sigma", e.to_string())))
        .collect::<Result<_>>()?;
    let batches = n.div_ceil(MC_BATCH);
    let results: Vec<Vec<Option<Vec<(f64, f64)>>>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = MC_BATCH.min(n - b * MC_BATCH);
            (0..count)
                .map(|_| {
                    let x: Vec<f64> = dists.iter().map(|d| d.sample(&mut rng)).collect();
                    solver(&x).ok()
                })
                .collect()
        })
        .collect();
    let flat: Vec<Option<Vec<(f64, f64)>>> = results.into_iter().flatten().collect();
    let ok: Vec<&Vec<(f64, f64)>> = flat.iter().flatten().collect();
    let failed = n - ok.len();
    if failed as f64 > 0.05 * n as f64 || ok.len() < 2 {
        return Err(KerrcatError::PropagationUnreliable { failed, total: n });
    }
    let nout = ok[0].len();
    let m = ok.len() as f64;
    let outputs = (0..nout)
        .map(|k| {
            let mean = ok.iter().map(|v| v[k].0).sum::<f64>() / m;
            let var = ok.iter().map(|v| (v[k].0 - mean).powi(2)).sum::<f64>() / (m - 1.0);
            let econd = ok.iter().map(|v| v[k].1 * v[k].1).sum::<f64>() / m;
            McComponent { mean, total_variance: var + econd, expected_conditional_variance: econd, variance_of_means: var }
        })
        .collect();
    Ok(MonteCarloSummary { samples: n, failed, seed, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_exact() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0).collect();
        let r = nonlinear_least_squares(
            |p| x.iter().map(|v| p[0] * v + p[1]).collect(),
            &y,
            None,
            &["m", "b"],
            &[1.0, 0.0],
            None,
            FitOptions::default(),
        )
        .unwrap();
        assert!((r.params[0] - 3.0).abs() < 1e-10 && (r.params[1] + 2.0).abs() < 1e-10);
    }

    #[test]
    fn cascade_factor_limit_is_continuous() {
        let a = cascade_factor(1.0, 1.0, 0.7);
        let b = cascade_factor(1.0 + 1e-7, 1.0, 0.7);
        assert!((a - 0.7 * (-0.7f64).exp()).abs() < 1e-15);
        assert!((a - b).abs() < 1e-7);
    }
}
