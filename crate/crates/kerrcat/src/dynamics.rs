//! Lindblad dynamics on dense superoperators.
//!
//! Vectorization is column-stacking throughout: `vec(AXB) = (Bᵀ⊗A)·vec(X)`.

use faer::linalg::solvers::{PartialPivLu, Solve};
use serde::{Deserialize, Serialize};

use crate::error::{KerrcatError, Result};
use crate::linalg::{self, c, re, CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisTag {
    Fock,
    Eigen,
    Composite,
}

#[derive(Debug, Clone)]
pub struct Jump {
    pub rate: f64,
    pub op: CMat,
}

impl Jump {
    pub fn new(rate: f64, op: CMat) -> Self {
        Self { rate, op }
    }
}

#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub hamiltonian: CMat,
    pub jumps: Vec<Jump>,
    pub basis: BasisTag,
}

impl LindbladModel {
    pub fn new(hamiltonian: CMat, jumps: Vec<Jump>, basis: BasisTag) -> Result<Self> {
        let m = Self { hamiltonian, jumps, basis };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.hamiltonian.nrows();
        if self.hamiltonian.ncols() != n {
            return Err(KerrcatError::InvalidModel("Hamiltonian is not square".into()));
        }
        for (k, j) in self.jumps.iter().enumerate() {
            if j.op.nrows() != n || j.op.ncols() != n {
                return Err(KerrcatError::InvalidModel(format!(
                    "jump {k} is {}x{}, Hamiltonian is {n}x{n}",
                    j.op.nrows(),
                    j.op.ncols()
                )));
            }
            if !j.rate.is_finite() || j.rate < 0.0 {
                return Err(KerrcatError::InvalidModel(format!("jump {k} has rate {}", j.rate)));
            }
        }
        Ok(())
    }

    /// Adds `rate·D[op]`, skipping zero rates.
    pub fn push_jump(&mut self, rate: f64, op: CMat) {
        if rate > 0.0 {
            self.jumps.push(Jump::new(rate, op));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    matrix: CMat,
    basis: BasisTag,
    factor_dims: Vec<usize>,
}

impl DensityState {
    /// Validated constructor: Hermitian to 1e−10, unit trace to 1e−9, eigenvalues ≥ −1e−9.
    pub fn new(matrix: CMat, basis: BasisTag, factor_dims: Vec<usize>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(KerrcatError::InvalidState("density matrix is not square".into()));
        }
        if factor_dims.iter().product::<usize>() != n {
            return Err(KerrcatError::InvalidState(format!("factor dims {factor_dims:?} do not multiply to {n}")));
        }
        if !linalg::is_finite(&matrix) {
            return Err(KerrcatError::InvalidState("non-finite entries".into()));
        }
        let herm_err = linalg::max_abs_diff(&matrix, &linalg::dagger(&matrix));
        if herm_err > 1e-10 {
            return Err(KerrcatError::InvalidState(format!("not Hermitian (deviation {herm_err:.2e})")));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(KerrcatError::InvalidState(format!("trace {tr} differs from 1")));
        }
        let (vals, _) = linalg::eigh(&linalg::hermitize(&matrix))?;
        if vals[0] < -1e-9 {
            return Err(KerrcatError::InvalidState(format!("negative eigenvalue {:.3e}", vals[0])));
        }
        Ok(Self { matrix, basis, factor_dims })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMat, basis: BasisTag, factor_dims: Vec<usize>) -> Self {
        Self { matrix, basis, factor_dims }
    }

    pub fn pure(psi: &[C64], basis: BasisTag, factor_dims: Vec<usize>) -> Result<Self> {
        let mut v = psi.to_vec();
        linalg::normalize(&mut v);
        Self::new(linalg::hermitize(&linalg::projector(&v)), basis, factor_dims)
    }

    pub fn single(matrix: CMat, basis: BasisTag) -> Result<Self> {
        let n = matrix.nrows();
        Self::new(matrix, basis, vec![n])
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigh(&linalg::hermitize(&self.matrix))?.0[0])
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::max_abs_diff(&self.matrix, &linalg::dagger(&self.matrix))
    }

    /// Reduced state of the first tensor factor of a two-factor state.
    pub fn trace_out_second(&self) -> Result<DensityState> {
        let [da, db] = self.two_factors()?;
        let m = CMat::from_fn(da, da, |i, k| (0..db).map(|j| self.matrix[(i * db + j, k * db + j)]).sum());
        Ok(Self::from_matrix_unchecked(m, self.basis, vec![da]))
    }

    /// Reduced state of the second tensor factor of a two-factor state.
    pub fn trace_out_first(&self) -> Result<DensityState> {
        let [da, db] = self.two_factors()?;
        let m = CMat::from_fn(db, db, |j, l| (0..da).map(|i| self.matrix[(i * db + j, i * db + l)]).sum());
        Ok(Self::from_matrix_unchecked(m, self.basis, vec![db]))
    }

    fn two_factors(&self) -> Result<[usize; 2]> {
        match self.factor_dims.as_slice() {
            [a, b] => Ok([*a, *b]),
            other => Err(KerrcatError::InvalidShape(format!("expected two tensor factors, have {other:?}"))),
        }
    }

    pub fn trace_distance(&self, other: &DensityState) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(KerrcatError::InvalidShape("trace distance of mismatched states".into()));
        }
        let (vals, _) = linalg::eigh(&linalg::hermitize(&(&self.matrix - &other.matrix)))?;
        Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
    }
}

/// Adds `coef·(I⊗A)` (left multiplication) into a superoperator.
fn add_left(out: &mut CMat, a: &CMat, coef: C64) {
    let n = a.nrows();
    for k in 0..n {
        for i in 0..n {
            let v = a[(i, k)];
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            let v = v * coef;
            for j in 0..n {
                out[(j * n + i, j * n + k)] += v;
            }
        }
    }
}

/// Adds `coef·(Bᵀ⊗I)` (right multiplication) into a superoperator.
fn add_right(out: &mut CMat, b: &CMat, coef: C64) {
    let n = b.nrows();
    for j in 0..n {
        for l in 0..n {
            let v = b[(l, j)];
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            let v = v * coef;
            for i in 0..n {
                out[(j * n + i, l * n + i)] += v;
            }
        }
    }
}

/// Adds `coef·(L̄⊗L)`, i.e. `X ↦ coef·L X L†`.
fn add_sandwich(out: &mut CMat, l: &CMat, coef: C64) {
    let n = l.nrows();
    let nz: Vec<(usize, usize, C64)> = (0..n)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .filter_map(|(i, k)| {
            let v = l[(i, k)];
            (v != C64::new(0.0, 0.0)).then_some((i, k, v))
        })
        .collect();
    for &(j, lcol, vjl) in &nz {
        let cj = vjl.conj() * coef;
        for &(i, k, vik) in &nz {
            out[(j * n + i, lcol * n + k)] += cj * vik;
        }
    }
}

pub fn build_liouvillian(model: &LindbladModel) -> Result<CMat> {
    model.validate()?;
    let n = model.dim();
    let mut l = linalg::zeros(n * n, n * n);
    add_left(&mut l, &model.hamiltonian, c(0.0, -1.0));
    add_right(&mut l, &model.hamiltonian, c(0.0, 1.0));
    for j in &model.jumps {
        if j.rate == 0.0 {
            continue;
        }
        let ldl = linalg::dagger(&j.op) * &j.op;
        add_sandwich(&mut l, &j.op, re(j.rate));
        add_left(&mut l, &ldl, re(-0.5 * j.rate));
        add_right(&mut l, &ldl, re(-0.5 * j.rate));
    }
    Ok(l)
}

/// `dρ/dt` evaluated directly in Hilbert space (used by the fixed-step integrators).
pub fn lindblad_rhs(h: &CMat, jumps: &[Jump], rho: &CMat) -> CMat {
    let mut out = linalg::scale(&linalg::commutator(h, rho), c(0.0, -1.0));
    for jump in jumps {
        if jump.rate == 0.0 {
            continue;
        }
        let l = &jump.op;
        let ld = linalg::dagger(l);
        let ldl = &ld * l;
        let lrl = &(l * rho) * &ld;
        let anti = &(&ldl * rho) + &(rho * &ldl);
        out = &out + &linalg::scale_real(&(&lrl - &linalg::scale_real(&anti, 0.5)), jump.rate);
    }
    out
}

/// Eigendecomposition `L = R Λ R⁻¹` reused across initial states and times.
pub struct SpectralPropagator {
    dim: usize,
    eigenvalues: Vec<C64>,
    right: CMat,
    lu: PartialPivLu<C64>,
    kernel: Vec<usize>,
}

impl SpectralPropagator {
    /// Fails with `PropagationFailure` when `L` is numerically defective.
    pub fn new(liouvillian: &CMat) -> Result<Self> {
        let big = liouvillian.nrows();
        let dim = (big as f64).sqrt().round() as usize;
        if dim * dim != big {
            return Err(KerrcatError::InvalidModel(format!("superoperator size {big} is not a square")));
        }
        let evd = liouvillian
            .eigen()
            .map_err(|e| KerrcatError::PropagationFailure(format!("eigensolver: {e:?}")))?;
        let s = evd.S().column_vector();
        let eigenvalues: Vec<C64> = (0..big).map(|i| s[i]).collect();
        let right = evd.U().to_owned();
        // Residual of the eigen-equation, relative to the operator scale.
        let lr = liouvillian * &right;
        let mut worst = 0.0_f64;
        for j in 0..big {
            for i in 0..big {
                worst = worst.max((lr[(i, j)] - right[(i, j)] * eigenvalues[j]).norm());
            }
        }
        let scale = linalg::max_abs(liouvillian).max(1.0);
        if !(worst <= 1e-8 * scale * (big as f64).sqrt()) {
            return Err(KerrcatError::PropagationFailure(format!("eigen residual {worst:.3e} too large")));
        }
        // Tr(L R) = λ Tr(R) = 0, so every mode outside the kernel is traceless. Removing
        // the roundoff trace keeps long-time propagation trace-preserving.
        let mut right = right;
        let kernel_tol = 1e-9 * scale;
        let kernel: Vec<usize> = (0..big).filter(|&j| eigenvalues[j].norm() <= kernel_tol).collect();
        // Stationary modes are exactly stationary; a 1e−7 residue would otherwise grow
        // linearly over millisecond evolutions.
        let mut eigenvalues = eigenvalues;
        for &k in &kernel {
            eigenvalues[k] = C64::new(0.0, 0.0);
        }
        for j in 0..big {
            if eigenvalues[j].norm() > kernel_tol {
                let tr: C64 = (0..dim).map(|d| right[(d * dim + d, j)]).sum();
                let shift = tr / dim as f64;
                for d in 0..dim {
                    right[(d * dim + d, j)] -= shift;
                }
            }
        }
        let lu = right.partial_piv_lu();
        Ok(Self { dim, eigenvalues, right, lu, kernel })
    }

    pub fn eigenvalues(&self) -> &[C64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mode amplitudes of an initial state; errors when `R` is too ill-conditioned
    /// to reproduce it.
    pub fn coefficients(&self, rho0: &CMat) -> Result<Vec<C64>> {
        let v = linalg::vectorize(rho0);
        let b = linalg::col_vector(&v);
        let x = self.lu.solve(&b);
        let mut coeffs = linalg::column(&x, 0);
        // With a unique stationary mode the trace fixes its amplitude exactly.
        if let [k] = self.kernel[..] {
            let tr_mode: C64 = (0..self.dim).map(|d| self.right[(d * self.dim + d, k)]).sum();
            if tr_mode.norm() > 1e-12 {
                coeffs[k] = linalg::trace(rho0) / tr_mode;
            }
        }
        let back = linalg::matvec(&self.right, &coeffs);
        let err = back.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if !(err < 1e-8) {
            return Err(KerrcatError::PropagationFailure(format!(
                "eigenvector basis is ill-conditioned (reconstruction error {err:.2e})"
            )));
        }
        Ok(coeffs)
    }

    pub fn state_at(&self, coeffs: &[C64], t: f64) -> CMat {
        let weighted: Vec<C64> = coeffs.iter().zip(&self.eigenvalues).map(|(cf, l)| cf * (l * t).exp()).collect();
        linalg::unvectorize(&linalg::matvec(&self.right, &weighted), self.dim)
    }

    /// `Tr(O·ρ(t))` for many times without forming each `ρ(t)`.
    pub fn expectation_series(&self, coeffs: &[C64], observable: &CMat, times: &[f64]) -> Vec<C64> {
        // Tr(Oρ) = Σ_ij O_ji ρ_ij = vec(Oᵀ)·vec(ρ); project each mode once.
        let ot = linalg::vectorize(&linalg::transpose(observable));
        let mode_weights: Vec<C64> = (0..self.right.ncols())
            .map(|k| (0..self.right.nrows()).map(|i| ot[i] * self.right[(i, k)]).sum::<C64>() * coeffs[k])
            .collect();
        times
            .iter()
            .map(|&t| mode_weights.iter().zip(&self.eigenvalues).map(|(w, l)| w * (l * t).exp()).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub allow_fallback: bool,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { allow_fallback: true, rtol: 1e-10, atol: 1e-12 }
    }
}

pub fn evolve(model: &LindbladModel, rho0: &DensityState, times: &[f64]) -> Result<Vec<DensityState>> {
    evolve_with(model, rho0, times, EvolveOptions::default())
}

pub fn evolve_with(
    model: &LindbladModel,
    rho0: &DensityState,
    times: &[f64],
    opts: EvolveOptions,
) -> Result<Vec<DensityState>> {
    if rho0.dim() != model.dim() {
        return Err(KerrcatError::InvalidShape(format!("state dim {} vs model dim {}", rho0.dim(), model.dim())));
    }
    let l = build_liouvillian(model)?;
    let spectral = SpectralPropagator::new(&l).and_then(|p| {
        let cf = p.coefficients(rho0.matrix())?;
        Ok(times.iter().map(|&t| p.state_at(&cf, t)).collect::<Vec<_>>())
    });
    let mats = match spectral {
        Ok(m) => m,
        Err(e) if opts.allow_fallback => {
            log::info!("spectral propagation unavailable ({e}); using adaptive stepping");
            adaptive_propagate(&l, rho0.matrix(), times, opts.rtol, opts.atol)?
        }
        Err(e) => return Err(e),
    };
    if let Some(last) = mats.last() {
        let drift = (linalg::trace(last) - re(1.0)).norm();
        if drift > 1e-8 {
            return Err(KerrcatError::PropagationFailure(format!("trace drift {drift:.2e}")));
        }
    }
    Ok(mats
        .into_iter()
        .map(|m| DensityState::from_matrix_unchecked(m, rho0.basis(), rho0.factor_dims().to_vec()))
        .collect())
}

/// Dormand–Prince 5(4) on `vec(ρ)`, emitting the requested (sorted) times.
fn adaptive_propagate(l: &CMat, rho0: &CMat, times: &[f64], rtol: f64, atol: f64) -> Result<Vec<CMat>> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = rho0.nrows();
    let f = |v: &[C64]| linalg::matvec(l, v);
    let mut y = linalg::vectorize(rho0);
    let mut t = 0.0;
    let scale = linalg::max_abs(l).max(1e-300);
    let mut h = 0.01 / scale;
    let mut out = Vec::with_capacity(times.len());
    let mut steps = 0usize;
    for &target in times {
        if target < t {
            return Err(KerrcatError::PropagationFailure("times must be sorted ascending".into()));
        }
        while t < target {
            steps += 1;
            if steps > 50_000_000 {
                return Err(KerrcatError::PropagationFailure("adaptive stepper exceeded step budget".into()));
            }
            let h_try = h.min(target - t);
            let mut k: Vec<Vec<C64>> = Vec::with_capacity(7);
            k.push(f(&y));
            for stage in 0..6 {
                let mut yt = y.clone();
                for (p, kp) in k.iter().enumerate() {
                    let a = A[stage][p];
                    if a != 0.0 {
                        for (yi, ki) in yt.iter_mut().zip(kp) {
                            *yi += ki * (a * h_try);
                        }
                    }
                }
                k.push(f(&yt));
            }
            let mut y5 = y.clone();
            let mut err = 0.0_f64;
            for i in 0..y.len() {
                let mut d5 = C64::new(0.0, 0.0);
                let mut d4 = C64::new(0.0, 0.0);
                for s in 0..7 {
                    d5 += k[s][i] * B5[s];
                    d4 += k[s][i] * B4[s];
                }
                y5[i] += d5 * h_try;
                let tol = atol + rtol * y[i].norm().max(y5[i].norm());
                err = err.max(((d5 - d4) * h_try).norm() / tol);
            }
            if err <= 1.0 {
                t += h_try;
                y = y5;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = h_try * factor;
        }
        out.push(linalg::unvectorize(&y, n));
    }
    Ok(out)
}

/// Time-dependent generator for the fixed-step integrators.
pub trait TimeDependentHamiltonian {
    fn dim(&self) -> usize;
    fn matrix_at(&self, t: f64) -> CMat;
    /// `out = H(t)·v`; override when `H` is sparse.
    fn apply(&self, t: f64, v: &[C64], out: &mut [C64]) {
        let r = linalg::matvec(&self.matrix_at(t), v);
        out.copy_from_slice(&r);
    }
}

impl<F: Fn(f64) -> CMat> TimeDependentHamiltonian for F {
    fn dim(&self) -> usize {
        self(0.0).nrows()
    }
    fn matrix_at(&self, t: f64) -> CMat {
        self(t)
    }
}

/// Triplet storage for operators that are mostly zero.
#[derive(Debug, Clone)]
pub struct SparseOp {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn from_dense(m: &CMat) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self { dim: m.nrows(), entries }
    }

    pub fn accumulate(&self, coef: C64, v: &[C64], out: &mut [C64]) {
        for &(i, j, x) in &self.entries {
            out[i] += coef * x * v[j];
        }
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = linalg::zeros(self.dim, self.dim);
        for &(i, j, x) in &self.entries {
            m[(i, j)] += x;
        }
        m
    }
}

/// `H(t) = Σ_k f_k(t)·A_k`, with each `A_k` stored sparsely.
pub struct DriveSum<'a> {
    dim: usize,
    terms: Vec<(SparseOp, Box<dyn Fn(f64) -> C64 + Send + Sync + 'a>)>,
}

impl<'a> DriveSum<'a> {
    pub fn new(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    pub fn term(mut self, op: &CMat, coef: impl Fn(f64) -> C64 + Send + Sync + 'a) -> Self {
        assert_eq!(op.nrows(), self.dim, "drive term dimension");
        self.terms.push((SparseOp::from_dense(op), Box::new(coef)));
        self
    }

    /// Gershgorin bound on the spectral radius at time `t`.
    pub fn spectral_bound(&self, t: f64) -> f64 {
        let m = self.matrix_at(t);
        (0..self.dim).map(|i| (0..self.dim).map(|j| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
    }
}

impl TimeDependentHamiltonian for DriveSum<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn matrix_at(&self, t: f64) -> CMat {
        let mut m = linalg::zeros(self.dim, self.dim);
        for (op, f) in &self.terms {
            let cf = f(t);
            for &(i, j, x) in &op.entries {
                m[(i, j)] += cf * x;
            }
        }
        m
    }

    fn apply(&self, t: f64, v: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for (op, f) in &self.terms {
            let cf = f(t);
            if cf != C64::new(0.0, 0.0) {
                op.accumulate(cf, v, out);
            }
        }
    }
}

/// Fixed-step RK4 for `i dψ/dt = H(t)ψ`. Fails when the norm drifts by more than 1e−7.
pub fn evolve_schrodinger<H: TimeDependentHamiltonian + ?Sized>(
    h: &H,
    psi0: &[C64],
    t_end: f64,
    dt_max: f64,
) -> Result<Vec<C64>> {
    if !(dt_max > 0.0) || !(t_end >= 0.0) {
        return Err(KerrcatError::param("dt_max", "step and duration must be positive"));
    }
    let n = h.dim();
    if psi0.len() != n {
        return Err(KerrcatError::InvalidShape(format!("state length {} vs dim {n}", psi0.len())));
    }
    let steps = (t_end / dt_max).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let norm0 = linalg::norm(psi0);
    let mut y = psi0.to_vec();
    let mut hv = vec![C64::new(0.0, 0.0); n];
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    let mut k = [vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]];
    let mi = c(0.0, -1.0);
    for s in 0..steps {
        let t = s as f64 * dt;
        let stage_times = [t, t + 0.5 * dt, t + 0.5 * dt, t + dt];
        let weights = [0.0, 0.5 * dt, 0.5 * dt, dt];
        for st in 0..4 {
            if st == 0 {
                tmp.copy_from_slice(&y);
            } else {
                for i in 0..n {
                    tmp[i] = y[i] + k[st - 1][i] * weights[st];
                }
            }
            h.apply(stage_times[st], &tmp, &mut hv);
            for i in 0..n {
                k[st][i] = mi * hv[i];
            }
        }
        for i in 0..n {
            y[i] += (k[0][i] + k[1][i] * 2.0 + k[2][i] * 2.0 + k[3][i]) * (dt / 6.0);
        }
    }
    let drift = (linalg::norm(&y) - norm0).abs();
    if drift > 1e-7 {
        return Err(KerrcatError::StepSizeTooLarge { drift });
    }
    Ok(y)
}

/// Fixed-step RK4 for the master equation with a time-dependent Hamiltonian.
/// Pure initial states without jumps are propagated as state vectors.
pub fn evolve_time_dependent<H: TimeDependentHamiltonian + ?Sized>(
    h: &H,
    jumps: &[Jump],
    rho0: &DensityState,
    t_end: f64,
    dt_max: f64,
) -> Result<DensityState> {
    let n = h.dim();
    if rho0.dim() != n {
        return Err(KerrcatError::InvalidShape(format!("state dim {} vs Hamiltonian dim {n}", rho0.dim())));
    }
    let active: Vec<Jump> = jumps.iter().filter(|j| j.rate > 0.0).cloned().collect();
    let purity = linalg::trace(&(rho0.matrix() * rho0.matrix())).re;
    if active.is_empty() && (purity - 1.0).abs() < 1e-12 {
        let (vals, vecs) = linalg::eigh(&linalg::hermitize(rho0.matrix()))?;
        let top = vals.len() - 1;
        let psi = linalg::column(&vecs, top);
        let out = evolve_schrodinger(h, &psi, t_end, dt_max)?;
        let m = linalg::projector(&out);
        return Ok(DensityState::from_matrix_unchecked(m, rho0.basis(), rho0.factor_dims().to_vec()));
    }
    if !(dt_max > 0.0) || !(t_end >= 0.0) {
        return Err(KerrcatError::param("dt_max", "step and duration must be positive"));
    }
    let steps = (t_end / dt_max).ceil().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let mut rho = rho0.matrix().clone();
    let tr0 = linalg::trace(&rho);
    for s in 0..steps {
        let t = s as f64 * dt;
        let h0 = h.matrix_at(t);
        let hm = h.matrix_at(t + 0.5 * dt);
        let h1 = h.matrix_at(t + dt);
        let k1 = lindblad_rhs(&h0, &active, &rho);
        let k2 = lindblad_rhs(&hm, &active, &(&rho + &linalg::scale_real(&k1, 0.5 * dt)));
        let k3 = lindblad_rhs(&hm, &active, &(&rho + &linalg::scale_real(&k2, 0.5 * dt)));
        let k4 = lindblad_rhs(&h1, &active, &(&rho + &linalg::scale_real(&k3, dt)));
        let incr = &(&k1 + &linalg::scale_real(&(&k2 + &k3), 2.0)) + &k4;
        rho = &rho + &linalg::scale_real(&incr, dt / 6.0);
    }
    // The RK4 update is traceless for any step, so divergence shows up as lost
    // positivity or overflow rather than as trace drift.
    let mut drift = (linalg::trace(&rho) - tr0).norm();
    if !linalg::is_finite(&rho) {
        drift = f64::INFINITY;
    } else {
        let (vals, _) = linalg::eigh(&linalg::hermitize(&rho))?;
        drift = drift.max(-vals[0]);
    }
    if drift > 1e-7 {
        return Err(KerrcatError::StepSizeTooLarge { drift });
    }
    Ok(DensityState::from_matrix_unchecked(rho, rho0.basis(), rho0.factor_dims().to_vec()))
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions {
    /// Check the Liouvillian spectral gap before solving (costs one eigenvalue solve).
    pub verify_unique: bool,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self { verify_unique: true }
    }
}

pub fn steady_state(model: &LindbladModel) -> Result<DensityState> {
    steady_state_with(model, SteadyStateOptions::default())
}

/// Solves `L·vec(ρ) = 0` with the first row replaced by the trace constraint.
pub fn steady_state_with(model: &LindbladModel, opts: SteadyStateOptions) -> Result<DensityState> {
    let n = model.dim();
    let l = build_liouvillian(model)?;
    if opts.verify_unique {
        let ev = l
            .eigenvalues()
            .map_err(|e| KerrcatError::PropagationFailure(format!("eigenvalue solve: {e:?}")))?;
        let mut mags: Vec<f64> = ev.iter().map(|z| z.re.abs()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if mags.len() > 1 && !(mags[1] > 1e3 * mags[0]) {
            return Err(KerrcatError::NonUniqueSteadyState(format!(
                "two slowest rates {:.3e} and {:.3e} are not separated",
                mags[0], mags[1]
            )));
        }
    }
    let big = n * n;
    let mut a = l.clone();
    for j in 0..big {
        a[(0, j)] = C64::new(0.0, 0.0);
    }
    for i in 0..n {
        a[(0, i * n + i)] = re(1.0);
    }
    let mut rhs = linalg::zeros(big, 1);
    rhs[(0, 0)] = re(1.0);
    let x = a.partial_piv_lu().solve(&rhs);
    let v = linalg::column(&x, 0);
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(KerrcatError::NonUniqueSteadyState("trace-constrained system is singular".into()));
    }
    let resid = linalg::norm(&linalg::matvec(&l, &v));
    let lnorm = linalg::frobenius(&l);
    if resid > 1e-10 * lnorm {
        return Err(KerrcatError::NonUniqueSteadyState(format!(
            "residual {resid:.3e} exceeds 1e-10·|L| = {:.3e}",
            1e-10 * lnorm
        )));
    }
    let rho = linalg::hermitize(&linalg::unvectorize(&v, n));
    let rho = clip_to_psd(&rho)?;
    Ok(DensityState::from_matrix_unchecked(rho, model.basis, vec![n]))
}

/// Clips roundoff-level negative eigenvalues (|λ| < 1e−8) and renormalizes; larger
/// negative eigenvalues indicate a modelling error.
pub fn clip_to_psd(rho: &CMat) -> Result<CMat> {
    let (vals, u) = linalg::eigh(rho)?;
    if vals[0] < -1e-8 {
        return Err(KerrcatError::PropagationFailure(format!("state has eigenvalue {:.3e}", vals[0])));
    }
    if vals[0] >= 0.0 {
        let tr = linalg::trace(rho).re;
        return Ok(linalg::scale_real(rho, 1.0 / tr));
    }
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let n = vals.len();
    let mut scaled = u.clone();
    for j in 0..n {
        for i in 0..n {
            scaled[(i, j)] *= clipped[j] / total;
        }
    }
    Ok(linalg::hermitize(&(&scaled * u.adjoint())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayMode {
    pub rate: f64,
    pub frequency: f64,
    pub overlap: f64,
}

/// `−Re λ` of the Liouvillian mode whose right eigenmatrix overlaps most with `observable`.
pub fn slowest_decay_rate(model: &LindbladModel, observable: &CMat) -> Result<f64> {
    Ok(dominant_decay_mode(model, observable)?.rate)
}

pub fn dominant_decay_mode(model: &LindbladModel, observable: &CMat) -> Result<DecayMode> {
    let n = model.dim();
    if observable.nrows() != n || observable.ncols() != n {
        return Err(KerrcatError::InvalidShape("observable does not match model".into()));
    }
    let l = build_liouvillian(model)?;
    let evd = l.eigen().map_err(|e| KerrcatError::PropagationFailure(format!("eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let big = n * n;
    let eig: Vec<C64> = (0..big).map(|i| s[i]).collect();
    let steady = (0..big).min_by(|&a, &b| eig[a].norm().partial_cmp(&eig[b].norm()).unwrap()).unwrap();
    let ov = linalg::vectorize(observable);
    let onorm = linalg::norm(&ov);
    let mut scored: Vec<(f64, usize)> = (0..big)
        .filter(|&k| k != steady)
        .map(|k| {
            let col: Vec<C64> = (0..big).map(|i| u[(i, k)]).collect();
            let o = linalg::inner(&ov, &col).norm() / (onorm * linalg::norm(&col));
            (o, k)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let (best, kb) = scored[0];
    let lb = eig[kb];
    // A complex-conjugate partner describes the same physical decay.
    let tol = 1e-6 * lb.norm().max(1.0);
    if let Some(&(second, _)) = scored[1..].iter().find(|(_, k)| (eig[*k] - lb.conj()).norm() > tol && (eig[*k] - lb).norm() > tol) {
        if second > 0.9 * best {
            return Err(KerrcatError::AmbiguousMode { first: best, second });
        }
    }
    Ok(DecayMode { rate: -lb.re, frequency: lb.im.abs(), overlap: best })
}

/// `Tr(op·ρ)`: real part plus the imaginary residue.
pub fn expectation(state: &DensityState, op: &CMat) -> Result<(f64, f64)> {
    let n = state.dim();
    if op.nrows() != n || op.ncols() != n {
        return Err(KerrcatError::InvalidShape(format!("operator {}x{} vs state {n}", op.nrows(), op.ncols())));
    }
    let rho = state.matrix();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += op[(i, k)] * rho[(k, i)];
        }
    }
    Ok((acc.re, acc.im))
}
