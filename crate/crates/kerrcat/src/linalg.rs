//! Dense complex helpers shared by every module.

use faer::{c64, Mat, Side};

use crate::error::{KerrcatError, Result};

pub type C64 = c64;
pub type CMat = Mat<c64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn zeros(r: usize, cols: usize) -> CMat {
    CMat::zeros(r, cols)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag(values: &[C64]) -> CMat {
    let n = values.len();
    let mut m = zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = *v;
    }
    m
}

pub fn diag_real(values: &[f64]) -> CMat {
    let v: Vec<C64> = values.iter().map(|&x| re(x)).collect();
    diag(&v)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn transpose(m: &CMat) -> CMat {
    m.transpose().to_owned()
}

pub fn conj(m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].conj())
}

pub fn scale(m: &CMat, s: C64) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn scale_real(m: &CMat, s: f64) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn add(a: &CMat, b: &CMat) -> CMat {
    a + b
}

pub fn sub(a: &CMat, b: &CMat) -> CMat {
    a - b
}

pub fn mul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    &(a * b) - &(b * a)
}

/// Kronecker product, factor-A-major: `(A⊗B)[iA·nB + iB, jA·nB + jB] = A[iA,jA]·B[iB,jB]`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a - b))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm_l2()
}

pub fn is_finite(m: &CMat) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].re.is_finite() && m[(i, j)].im.is_finite()))
}

/// Hermiticity test relative to the largest entry.
pub fn is_hermitian(m: &CMat, rel_tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst <= rel_tol * scale
}

pub fn hermitize(m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| KerrcatError::PropagationFailure(format!("hermitian eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..m.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// `f(M)` for Hermitian `M` via its spectral decomposition.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> C64) -> Result<CMat> {
    let (vals, u) = eigh(m)?;
    let n = vals.len();
    let mut scaled = u.clone();
    for j in 0..n {
        let fj = f(vals[j]);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    Ok(&scaled * u.adjoint())
}

/// Principal square root of a positive semidefinite matrix; small negative
/// eigenvalues from roundoff are clipped to zero.
pub fn psd_sqrt(m: &CMat) -> Result<CMat> {
    hermitian_function(&hermitize(m), |x| re(x.max(0.0).sqrt()))
}

/// `e^M` for a general square matrix: scaling and squaring around a Taylor series.
/// Meant for the small superoperators of few-level models.
pub fn expm(m: &CMat) -> CMat {
    let n = m.nrows();
    let norm1 = (0..n).map(|j| (0..n).map(|i| m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let a = scale_real(m, 0.5f64.powi(squarings));
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..=20 {
        term = scale_real(&(&term * &a), 1.0 / k as f64);
        sum = &sum + &term;
        if max_abs(&term) < 1e-18 * max_abs(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Column-stacking vectorization: `vec(X)[j·n + i] = X[i, j]`.
pub fn vectorize(m: &CMat) -> Vec<C64> {
    let (r, cols) = (m.nrows(), m.ncols());
    let mut v = Vec::with_capacity(r * cols);
    for j in 0..cols {
        for i in 0..r {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn unvectorize(v: &[C64], n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| v[j * n + i])
}

pub fn col_vector(v: &[C64]) -> CMat {
    CMat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn column(m: &CMat, j: usize) -> Vec<C64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn matvec(m: &CMat, v: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m.nrows()];
    for j in 0..m.ncols() {
        let vj = v[j];
        if vj == C64::new(0.0, 0.0) {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * vj;
        }
    }
    out
}

/// `⟨u|v⟩` with the first argument conjugated.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalize(v: &mut [C64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// `|u⟩⟨v|`
pub fn outer(u: &[C64], v: &[C64]) -> CMat {
    CMat::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
}

pub fn projector(v: &[C64]) -> CMat {
    outer(v, v)
}

/// Expectation `⟨v|M|v⟩`.
pub fn sandwich(v: &[C64], m: &CMat) -> C64 {
    inner(v, &matvec(m, v))
}

pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].conj() * b[(i, j)];
        }
    }
    s
}

/// `V† M V` for a basis given as the columns of `v`.
pub fn project(m: &CMat, v: &CMat) -> CMat {
    &(v.adjoint() * m) * v
}

pub fn submatrix_cols(m: &CMat, cols: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_layout_is_factor_a_major() {
        let a = CMat::from_fn(2, 2, |i, j| re((2 * i + j) as f64 + 1.0));
        let b = identity(2);
        let k = kron(&a, &b);
        assert_eq!(k[(0, 2)], re(2.0));
        assert_eq!(k[(3, 1)], re(3.0));
        assert_eq!(k[(1, 0)], re(0.0));
    }

    #[test]
    fn vectorize_round_trip() {
        let m = CMat::from_fn(3, 3, |i, j| c(i as f64, j as f64));
        let v = vectorize(&m);
        assert_eq!(v[1], c(1.0, 0.0));
        assert_eq!(unvectorize(&v, 3), m);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = diag_real(&[4.0, 1.0, -1e-14]);
        let s = psd_sqrt(&m).unwrap();
        assert!(max_abs_diff(&(&s * &s), &diag_real(&[4.0, 1.0, 0.0])) < 1e-12);
    }

    #[test]
    fn expm_matches_hermitian_path_and_rotation() {
        let h = CMat::from_fn(3, 3, |i, j| if i == j { re(i as f64) } else { c(0.3, 0.1 * (i as f64 - j as f64)) });
        let gen = scale(&h, c(0.0, -7.0));
        let want = hermitian_function(&h, |x| c(0.0, -7.0 * x).exp()).unwrap();
        assert!(max_abs_diff(&expm(&gen), &want) < 1e-12);
        // Real generator of a plane rotation by 40 radians.
        let mut g = zeros(2, 2);
        g[(0, 1)] = re(-40.0);
        g[(1, 0)] = re(40.0);
        let r = expm(&g);
        assert!((r[(0, 0)].re - 40f64.cos()).abs() < 1e-12 && (r[(1, 0)].re - 40f64.sin()).abs() < 1e-12);
    }
}
