//! Truncated Fock-space operators, displacements, tensor embedding and Wigner functions.

use serde::{Deserialize, Serialize};

use crate::dynamics::DensityState;
use crate::error::{KerrcatError, Result};
use crate::linalg::{self, c, re, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(KerrcatError::InvalidDimension(dim));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone)]
pub struct FockOperators {
    pub annihilation: CMat,
    pub creation: CMat,
    pub number: CMat,
    pub parity: CMat,
}

pub fn fock_operators(space: FockSpace) -> FockOperators {
    let n = space.dim();
    let mut a = linalg::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = re((k as f64).sqrt());
    }
    let number = linalg::diag_real(&(0..n).map(|k| k as f64).collect::<Vec<_>>());
    let parity = linalg::diag_real(&(0..n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>());
    FockOperators { creation: linalg::dagger(&a), annihilation: a, number, parity }
}

/// Convenience wrapper validating the dimension first.
pub fn build_fock_operators(dim: usize) -> Result<FockOperators> {
    Ok(fock_operators(FockSpace::new(dim)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub re: f64,
    pub im: f64,
}

impl PhaseSpacePoint {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn as_complex(&self) -> C64 {
        c(self.re, self.im)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// `D(β) = exp(βa† − β*a)`, built from the spectral decomposition of the
/// Hermitian generator `i(βa† − β*a)` so the result stays unitary.
pub fn displacement_operator(space: FockSpace, beta: PhaseSpacePoint) -> CMat {
    let n = space.dim();
    if beta.norm_sqr() > n as f64 / 4.0 {
        log::warn!("|beta|^2 = {:.3} exceeds dim/4 = {:.2}; truncation dominates", beta.norm_sqr(), n as f64 / 4.0);
    }
    if beta.norm_sqr() == 0.0 {
        return linalg::identity(n);
    }
    let ops = fock_operators(space);
    let b = beta.as_complex();
    let gen = &linalg::scale(&ops.creation, b) - &linalg::scale(&ops.annihilation, b.conj());
    // gen is anti-Hermitian: gen = -i G with G = i·gen Hermitian, so exp(gen) = exp(-iG).
    let g = linalg::hermitize(&linalg::scale(&gen, c(0.0, 1.0)));
    linalg::hermitian_function(&g, |x| c(x.cos(), -x.sin())).expect("hermitian eigensolve of displacement generator")
}

/// Coherent state `|α⟩` truncated to `dim` levels and renormalized.
pub fn coherent_state(dim: usize, alpha: C64) -> Vec<C64> {
    let mut v = Vec::with_capacity(dim);
    let mut amp = re((-alpha.norm_sqr() / 2.0).exp());
    for k in 0..dim {
        if k > 0 {
            amp = amp * alpha / (k as f64).sqrt();
        }
        v.push(amp);
    }
    linalg::normalize(&mut v);
    v
}

pub fn tensor_embed(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() || b.nrows() != b.ncols() {
        return Err(KerrcatError::InvalidShape(format!(
            "tensor factors must be square, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(linalg::kron(a, b))
}

/// Normalized associated-Laguerre table `f[n][k] = √(n!/(n+k)!) x^{k/2} e^{−x/2} L_n^{(k)}(x)`
/// for `n + k < dim`, filled by the three-term recurrence in `n`.
fn laguerre_table(dim: usize, x: f64) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; dim]; dim];
    let mut ln_fact = 0.0;
    for k in 0..dim {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        let f0 = if x == 0.0 {
            if k == 0 { 1.0 } else { 0.0 }
        } else {
            (0.5 * (k as f64 * x.ln() - ln_fact) - x / 2.0).exp()
        };
        let kf = k as f64;
        let mut prev = f0;
        table[0][k] = f0;
        if dim - k > 1 {
            let mut cur = (1.0 + kf - x) * f0 / (1.0 + kf).sqrt();
            table[1][k] = cur;
            for n in 1..(dim - k - 1) {
                let nf = n as f64;
                let next = ((2.0 * nf + 1.0 + kf - x) * ((nf + 1.0) / (nf + 1.0 + kf)).sqrt() * cur
                    - (nf + kf) * ((nf + 1.0) * nf / ((nf + 1.0 + kf) * (nf + kf))).sqrt() * prev)
                    / (nf + 1.0);
                prev = cur;
                cur = next;
                table[n + 1][k] = cur;
            }
        }
    }
    table
}

/// Exact (untruncated) matrix elements `⟨m|D(α)|n⟩` for `m, n < dim`.
pub fn displacement_elements(dim: usize, alpha: C64) -> CMat {
    let x = alpha.norm_sqr();
    let theta = alpha.arg();
    let f = laguerre_table(dim, x);
    CMat::from_fn(dim, dim, |m, n| {
        if m >= n {
            let k = m - n;
            C64::from_polar(f[n][k], k as f64 * theta)
        } else {
            let k = n - m;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            C64::from_polar(sign * f[m][k], -(k as f64) * theta)
        }
    })
}

/// `W(β) = (2/π)·Tr[ρ D(β) P D†(β)] = (2/π)·Tr[ρ D(2β) P]`.
pub fn wigner_function(state: &DensityState, grid: &[PhaseSpacePoint]) -> Result<Vec<f64>> {
    let rho = state.matrix();
    let n = rho.nrows();
    if n != rho.ncols() {
        return Err(KerrcatError::InvalidState("density matrix is not square".into()));
    }
    if state.factor_dims().len() > 1 {
        return Err(KerrcatError::InvalidState("Wigner function needs a single Fock factor".into()));
    }
    let tr = linalg::trace(rho);
    if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
        return Err(KerrcatError::InvalidState(format!("trace {tr} is not 1")));
    }
    let mut out = Vec::with_capacity(grid.len());
    for beta in grid {
        let d = displacement_elements(n, beta.as_complex() * 2.0);
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..n {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            for k in 0..n {
                acc += rho[(m, k)] * d[(k, m)] * sign;
            }
        }
        let w = acc * (2.0 / std::f64::consts::PI);
        if w.im.abs() > 1e-10 {
            return Err(KerrcatError::InvalidState(format!("Wigner value has imaginary part {:.3e}", w.im)));
        }
        out.push(w.re);
    }
    Ok(out)
}

/// Square grid `[-half, half]²` with `n` points per axis, row-major in `im`.
pub fn square_grid(half: f64, n: usize) -> Vec<PhaseSpacePoint> {
    let step = if n > 1 { 2.0 * half / (n - 1) as f64 } else { 0.0 };
    let mut g = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            g.push(PhaseSpacePoint::new(-half + j as f64 * step, -half + i as f64 * step));
        }
    }
    g
}
