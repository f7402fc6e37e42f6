//! Static-effective Kerr-cat Hamiltonian, parity-paired manifolds and metapotential geometry.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{KerrcatError, Result};
use crate::hilbert::{fock_operators, FockSpace};
use crate::linalg::{self, re, CMat, C64};

/// Oscillator parameters; every frequency is angular (rad/s), every rate in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub k: f64,
    pub eps2: f64,
    pub delta: f64,
    pub g3: f64,
    pub xi_zro: f64,
    pub kappa_a: f64,
    pub n_th_a: f64,
    /// Drop the squeeze-induced Stark term; required when `g3 == 0`.
    pub omit_stark: bool,
}

pub const TWO_PI: f64 = 2.0 * PI;

impl OscillatorParams {
    /// ε₂ = 2.4K, Δ = 8K with K/2π = 1.74 MHz, g₃/2π = −6.5 MHz, T₁ = 55.7 µs, cold bath.
    pub fn working_point() -> Self {
        let k = TWO_PI * 1.74e6;
        Self {
            k,
            eps2: 2.4 * k,
            delta: 8.0 * k,
            g3: TWO_PI * -6.5e6,
            xi_zro: 0.0,
            kappa_a: 1.0 / 55.7e-6,
            n_th_a: 0.0,
            omit_stark: false,
        }
    }

    pub fn with_eps2_over_k(mut self, x: f64) -> Self {
        self.eps2 = x * self.k;
        self
    }

    pub fn with_delta_over_k(mut self, x: f64) -> Self {
        self.delta = x * self.k;
        self
    }

    pub fn with_thermal(mut self, n_th_a: f64) -> Self {
        self.n_th_a = n_th_a;
        self
    }

    pub fn with_kappa_a(mut self, kappa_a: f64) -> Self {
        self.kappa_a = kappa_a;
        self
    }

    pub fn without_stark(mut self) -> Self {
        self.omit_stark = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.k, self.eps2, self.delta, self.g3, self.xi_zro, self.kappa_a, self.n_th_a];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(KerrcatError::param("oscillator", "non-finite value"));
        }
        if self.k <= 0.0 {
            return Err(KerrcatError::param("K", "must be positive"));
        }
        if self.eps2 < 0.0 {
            return Err(KerrcatError::param("eps2", "must be non-negative"));
        }
        if self.kappa_a < 0.0 {
            return Err(KerrcatError::param("kappa_a", "must be non-negative"));
        }
        if self.n_th_a < 0.0 {
            return Err(KerrcatError::param("n_th_a", "must be non-negative"));
        }
        if self.g3 == 0.0 && !self.omit_stark && self.eps2 != 0.0 {
            return Err(KerrcatError::MissingStarkInput);
        }
        Ok(())
    }

    /// `4K(|ε₂/3g₃|² + |ξ_zro|²)`.
    pub fn stark_shift(&self) -> f64 {
        let sq = if self.omit_stark || self.g3 == 0.0 { 0.0 } else { (self.eps2 / (3.0 * self.g3)).powi(2) };
        4.0 * self.k * (sq + self.xi_zro * self.xi_zro)
    }

    pub fn effective_detuning(&self) -> f64 {
        self.delta - self.stark_shift()
    }
}

/// `H = (Δ − Stark) a†a − K a†²a² + ε₂(a² + a†²)`.
pub fn build_kcq_hamiltonian(p: &OscillatorParams, space: FockSpace) -> Result<CMat> {
    p.validate()?;
    let n = space.dim();
    let ops = fock_operators(space);
    let a2 = &ops.annihilation * &ops.annihilation;
    let ad2 = linalg::dagger(&a2);
    let det = p.effective_detuning();
    let mut h = linalg::scale_real(&(&a2 + &ad2), p.eps2);
    for m in 0..n {
        let mf = m as f64;
        h[(m, m)] += re(det * mf - p.k * mf * (mf - 1.0));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metapotential {
    pub well_amplitude: f64,
    pub well_energy: f64,
    pub saddle_energy: f64,
    pub saddle_location: crate::hilbert::PhaseSpacePoint,
}

/// Stationary points of `E(β) = Δ|β|² − K|β|⁴ + ε₂(β² + β*²)`, using the Stark-shifted detuning.
pub fn metapotential_geometry(p: &OscillatorParams) -> Metapotential {
    let d = p.effective_detuning();
    let (e2, k) = (p.eps2, p.k);
    let a2 = ((d + 2.0 * e2) / (2.0 * k)).max(0.0);
    let well_energy = if a2 > 0.0 { (d + 2.0 * e2).powi(2) / (4.0 * k) } else { 0.0 };
    let (saddle_energy, y) = if d > 2.0 * e2 {
        ((d - 2.0 * e2).powi(2) / (4.0 * k), ((d - 2.0 * e2) / (2.0 * k)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Metapotential {
        well_amplitude: a2.sqrt(),
        well_energy: well_energy.max(saddle_energy),
        saddle_energy,
        saddle_location: crate::hilbert::PhaseSpacePoint::new(0.0, y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    #[serde(rename = "+")]
    Even,
    #[serde(rename = "-")]
    Odd,
}

impl Parity {
    pub fn symbol(&self) -> char {
        match self {
            Parity::Even => '+',
            Parity::Odd => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateLabel {
    pub manifold: usize,
    pub parity: Parity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manifold {
    /// Column index of `ψ_i^+` among the eigenvectors.
    pub plus: usize,
    pub minus: usize,
    pub splitting: f64,
    pub mean_energy: f64,
    pub mean_photon: f64,
}

/// Eigenpairs sorted by descending energy, paired by parity into manifolds.
/// A trailing state without a partner of opposite parity is dropped.
#[derive(Debug, Clone)]
pub struct ManifoldSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
    pub labels: Vec<StateLabel>,
    pub parities: Vec<f64>,
    pub mean_photons: Vec<f64>,
    pub manifolds: Vec<Manifold>,
    pub confined_count: usize,
    pub metapotential: Metapotential,
}

pub fn diagonalize_and_classify(h: &CMat, space: FockSpace, meta: &Metapotential) -> Result<ManifoldSpectrum> {
    let n = space.dim();
    if h.nrows() != n || h.ncols() != n {
        return Err(KerrcatError::InvalidShape("Hamiltonian does not match the Fock space".into()));
    }
    if !linalg::is_hermitian(h, 1e-12) {
        return Err(KerrcatError::InvalidModel("Hamiltonian is not Hermitian".into()));
    }
    let ops = fock_operators(space);
    let comm = linalg::commutator(h, &ops.parity);
    // Parity-block diagonalization keeps degenerate pairs unmixed.
    let (values, vectors) = if linalg::max_abs(&comm) <= 1e-10 * linalg::max_abs(h).max(1e-300) {
        let mut vals = Vec::with_capacity(n);
        let mut vecs = linalg::zeros(n, n);
        let mut col = 0;
        for start in 0..2 {
            let idx: Vec<usize> = (start..n).step_by(2).collect();
            let block = CMat::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])]);
            let (bv, bu) = linalg::eigh(&block)?;
            for (k, v) in bv.iter().enumerate() {
                vals.push(*v);
                for (r, &fi) in idx.iter().enumerate() {
                    vecs[(fi, col)] = bu[(r, k)];
                }
                col += 1;
            }
        }
        (vals, vecs)
    } else {
        linalg::eigh(h)?
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let parity_diag: Vec<f64> = (0..n).map(|m| if m % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut even = Vec::new();
    let mut odd = Vec::new();
    let mut parities_all = Vec::with_capacity(n);
    for (rank, &k) in order.iter().enumerate() {
        let p: f64 = (0..n).map(|m| vectors[(m, k)].norm_sqr() * parity_diag[m]).sum();
        if p.abs() < 0.999 {
            return Err(KerrcatError::ParityMixing { index: rank, parity: p });
        }
        parities_all.push(p);
        if p > 0.0 {
            even.push(rank);
        } else {
            odd.push(rank);
        }
    }
    let pairs = even.len().min(odd.len());
    let mut keep: Vec<usize> = even[..pairs].iter().chain(odd[..pairs].iter()).copied().collect();
    keep.sort_unstable();

    let mut eigenvalues = Vec::with_capacity(keep.len());
    let mut eigenvectors = linalg::zeros(n, keep.len());
    let mut labels = Vec::with_capacity(keep.len());
    let mut parities = Vec::with_capacity(keep.len());
    let mut mean_photons = Vec::with_capacity(keep.len());
    let mut plus_idx = vec![0usize; pairs];
    let mut minus_idx = vec![0usize; pairs];
    for (col, &rank) in keep.iter().enumerate() {
        let k = order[rank];
        eigenvalues.push(values[k]);
        // Fix the global phase: largest-magnitude Fock amplitude real positive.
        let mut best = 0;
        for m in 0..n {
            if vectors[(m, k)].norm() > vectors[(best, k)].norm() {
                best = m;
            }
        }
        let phase = vectors[(best, k)].conj() / vectors[(best, k)].norm();
        for m in 0..n {
            eigenvectors[(m, col)] = vectors[(m, k)] * phase;
        }
        let mean_n: f64 = (0..n).map(|m| vectors[(m, k)].norm_sqr() * m as f64).sum();
        mean_photons.push(mean_n);
        let p = parities_all[rank];
        parities.push(p);
        let (parity, list) = if p > 0.0 { (Parity::Even, &even) } else { (Parity::Odd, &odd) };
        let manifold = list.iter().position(|&r| r == rank).unwrap();
        match parity {
            Parity::Even => plus_idx[manifold] = col,
            Parity::Odd => minus_idx[manifold] = col,
        }
        labels.push(StateLabel { manifold, parity });
    }
    let manifolds = (0..pairs)
        .map(|i| {
            let (p, m) = (plus_idx[i], minus_idx[i]);
            Manifold {
                plus: p,
                minus: m,
                splitting: (eigenvalues[p] - eigenvalues[m]).abs(),
                mean_energy: 0.5 * (eigenvalues[p] + eigenvalues[m]),
                mean_photon: 0.5 * (mean_photons[p] + mean_photons[m]),
            }
        })
        .collect();
    let confined_count = eigenvalues.iter().filter(|&&e| e > meta.saddle_energy).count();
    Ok(ManifoldSpectrum {
        eigenvalues,
        eigenvectors,
        labels,
        parities,
        mean_photons,
        manifolds,
        confined_count,
        metapotential: *meta,
    })
}

/// Hamiltonian, metapotential and classification in one call.
pub fn build_spectrum(p: &OscillatorParams, dim: usize) -> Result<ManifoldSpectrum> {
    let space = FockSpace::new(dim)?;
    let h = build_kcq_hamiltonian(p, space)?;
    diagonalize_and_classify(&h, space, &metapotential_geometry(p))
}

impl ManifoldSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn manifold_count(&self) -> usize {
        self.manifolds.len()
    }

    pub fn manifold(&self, i: usize) -> Result<&Manifold> {
        self.manifolds
            .get(i)
            .ok_or_else(|| KerrcatError::param("manifold", format!("index {i} beyond {} manifolds", self.manifolds.len())))
    }

    pub fn splitting(&self, i: usize) -> Result<f64> {
        Ok(self.manifold(i)?.splitting)
    }

    /// `ω_ij = Ē_j − Ē_i`.
    pub fn transition(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.manifold(j)?.mean_energy - self.manifold(i)?.mean_energy)
    }

    pub fn mean_photon(&self, i: usize) -> Result<f64> {
        Ok(self.manifold(i)?.mean_photon)
    }

    pub fn state(&self, col: usize) -> Vec<C64> {
        linalg::column(&self.eigenvectors, col)
    }

    pub fn plus(&self, i: usize) -> Result<Vec<C64>> {
        Ok(self.state(self.manifold(i)?.plus))
    }

    pub fn minus(&self, i: usize) -> Result<Vec<C64>> {
        Ok(self.state(self.manifold(i)?.minus))
    }

    /// Number of top eigenstates kept by eigenbasis projections: `max(8, confined + 2)`.
    pub fn default_truncation(&self) -> usize {
        (self.confined_count + 2).max(8).min(self.eigenvalues.len())
    }

    /// CSV with columns `index,manifold,parity,energy_over_h_Hz,mean_photon`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,manifold,parity,energy_over_h_Hz,mean_photon\n");
        for (k, lab) in self.labels.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.9}",
                k,
                lab.manifold,
                lab.parity.symbol(),
                self.eigenvalues[k] / TWO_PI,
                self.mean_photons[k]
            );
        }
        s
    }
}

/// Splitting of manifold `manifold` at `(eps2, delta)` with the other parameters from `p`.
pub fn splitting_at(p: &OscillatorParams, eps2: f64, delta: f64, manifold: usize, dim: usize) -> Result<f64> {
    let q = OscillatorParams { eps2, delta, ..*p };
    build_spectrum(&q, dim)?.splitting(manifold)
}

/// Bisection for `ΔE_manifold(ε₂) = target` at fixed Δ over `bracket`. The splitting must
/// decrease monotonically across the bracket (checked on 9 samples).
pub fn splitting_isoline(
    target: f64,
    delta: f64,
    p: &OscillatorParams,
    manifold: usize,
    bracket: (f64, f64),
    dim: usize,
) -> Result<f64> {
    if !(target > 0.0) {
        return Err(KerrcatError::param("target", "must be positive"));
    }
    let (mut lo, mut hi) = bracket;
    if !(hi > lo) {
        return Err(KerrcatError::BracketFailure(format!("empty bracket [{lo}, {hi}]")));
    }
    let f = |e: f64| splitting_at(p, e, delta, manifold, dim);
    let samples: Vec<f64> = (0..9).map(|k| lo + (hi - lo) * k as f64 / 8.0).map(f).collect::<Result<_>>()?;
    if samples.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-9)) {
        return Err(KerrcatError::AmbiguousIsoline);
    }
    let (flo, fhi) = (samples[0], samples[8]);
    if !(flo >= target && fhi <= target) {
        return Err(KerrcatError::BracketFailure(format!(
            "splitting runs {:.4e} → {:.4e} rad/s, target {:.4e}",
            flo, fhi, target
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if (fm - target).abs() < 1e-3 * target {
            return Ok(mid);
        }
        if fm > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(KerrcatError::BracketFailure("bisection did not converge".into()))
}

/// Smallest ε₂ on an ascending grid where the splitting has fallen to `target`, refined
/// by bisection inside the first grid cell that crosses. Returns `grid[0]` when the
/// splitting is already below target there.
pub fn isoline_first_crossing(
    target: f64,
    delta: f64,
    p: &OscillatorParams,
    manifold: usize,
    grid: &[f64],
    dim: usize,
) -> Result<f64> {
    let mut prev: Option<(f64, f64)> = None;
    for &e in grid {
        let v = splitting_at(p, e, delta, manifold, dim)?;
        if v <= target {
            return match prev {
                None => Ok(e),
                Some((pe, _)) => splitting_isoline(target, delta, p, manifold, (pe, e), dim),
            };
        }
        prev = Some((e, v));
    }
    Err(KerrcatError::BracketFailure(format!(
        "splitting of manifold {manifold} stays above target over the grid at delta/K = {:.3}",
        delta / p.k
    )))
}

/// Cat-qubit basis built from the ground manifold.
#[derive(Debug, Clone)]
pub struct KcqBasis {
    pub plus_z: Vec<C64>,
    pub minus_z: Vec<C64>,
    pub plus_x: Vec<C64>,
    pub minus_x: Vec<C64>,
    pub plus_y: Vec<C64>,
    pub minus_y: Vec<C64>,
}

pub fn kcq_basis_states(spec: &ManifoldSpectrum) -> Result<KcqBasis> {
    let p = spec.plus(0)?;
    let m = spec.minus(0)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let comb = |cp: C64, cm: C64| -> Vec<C64> {
        let mut v: Vec<C64> = p.iter().zip(&m).map(|(x, y)| (x * cp + y * cm) * s).collect();
        linalg::normalize(&mut v);
        v
    };
    let i = linalg::c(0.0, 1.0);
    Ok(KcqBasis {
        plus_z: comb(re(1.0), re(1.0)),
        minus_z: comb(re(1.0), re(-1.0)),
        plus_x: p.clone(),
        minus_x: m.clone(),
        plus_y: comb(re(1.0), -i),
        minus_y: comb(re(1.0), i),
    })
}

/// Top `m` eigenstates as a reduced basis with the ladder operator projected into it.
#[derive(Debug, Clone)]
pub struct EigenProjection {
    /// Fock-space columns of the kept eigenstates.
    pub vectors: CMat,
    pub energies: Vec<f64>,
    pub labels: Vec<StateLabel>,
    /// `V† a V` (not the truncation of `a` in the reduced space's own algebra).
    pub a: CMat,
    /// `V† a†a V`.
    pub number: CMat,
}

impl EigenProjection {
    pub fn new(spec: &ManifoldSpectrum, m: usize) -> Result<Self> {
        if m < 8 {
            return Err(KerrcatError::TruncationTooSmall(m));
        }
        if m > spec.eigenvalues.len() {
            return Err(KerrcatError::param("truncation", format!("{m} exceeds {} eigenstates", spec.eigenvalues.len())));
        }
        let cols: Vec<usize> = (0..m).collect();
        let vectors = linalg::submatrix_cols(&spec.eigenvectors, &cols);
        let ops = fock_operators(FockSpace::new(spec.dim())?);
        Ok(Self {
            a: linalg::project(&ops.annihilation, &vectors),
            number: linalg::project(&ops.number, &vectors),
            energies: spec.eigenvalues[..m].to_vec(),
            labels: spec.labels[..m].to_vec(),
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn hamiltonian(&self) -> CMat {
        linalg::diag_real(&self.energies)
    }

    /// `Π_i` restricted to the kept states.
    pub fn manifold_projector(&self, i: usize) -> CMat {
        let d: Vec<f64> = self.labels.iter().map(|l| if l.manifold == i { 1.0 } else { 0.0 }).collect();
        linalg::diag_real(&d)
    }

    pub fn manifolds_present(&self) -> usize {
        self.labels.iter().map(|l| l.manifold + 1).max().unwrap_or(0)
    }

    /// Coordinates of a Fock-space vector in the kept eigenbasis.
    pub fn coordinates(&self, psi: &[C64]) -> Vec<C64> {
        (0..self.dim()).map(|k| linalg::inner(&linalg::column(&self.vectors, k), psi)).collect()
    }

    /// Σ over states of manifold i of the diagonal populations of `rho`.
    pub fn manifold_population(&self, rho: &CMat, i: usize) -> f64 {
        self.labels.iter().enumerate().filter(|(_, l)| l.manifold == i).map(|(k, _)| rho[(k, k)].re).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undriven_spectrum_pairs_fock_states() {
        let p = OscillatorParams { eps2: 0.0, delta: 0.0, ..OscillatorParams::working_point() };
        let s = build_spectrum(&p, 12).unwrap();
        assert!(s.splitting(0).unwrap() < 1e-9 * p.k);
        assert!((s.splitting(1).unwrap() - 4.0 * p.k).abs() < 1e-9 * p.k);
    }

    #[test]
    fn missing_stark_input_is_reported() {
        let p = OscillatorParams { g3: 0.0, ..OscillatorParams::working_point() };
        assert_eq!(build_spectrum(&p, 20).unwrap_err(), KerrcatError::MissingStarkInput);
        assert!(build_spectrum(&p.without_stark(), 20).is_ok());
    }
}
