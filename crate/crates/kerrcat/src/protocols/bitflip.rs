use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composite::{
    build_coupled_model, effective_channels, effective_model, projected_z, CavityParams, CompositeModel, DissipationDrive,
};
use crate::dynamics::{dominant_decay_mode, evolve, BasisTag, DensityState};
use crate::error::{KerrcatError, Result};
use crate::fitting::{fit_exp, fit_lorentzian};
use crate::linalg::{self, c, re, CMat};
use crate::spectrum::{build_spectrum, EigenProjection, ManifoldSpectrum, OscillatorParams, TWO_PI};

/// Background detuning the relative ⟨Z⟩ change is normalized to.
pub const BACKGROUND_DETUNING: f64 = -TWO_PI * 3e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TzMethod {
    Spectral,
    TimeDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitFlipTime {
    pub tz: f64,
    pub method: TzMethod,
}

/// `(|+Z⟩⟨+Z|, Ô_Z)` in the projected oscillator basis.
fn z_pair(proj: &EigenProjection, spec: &ManifoldSpectrum) -> Result<(CMat, CMat)> {
    let m0 = spec.manifold(0)?;
    let mut v = vec![c(0.0, 0.0); proj.dim()];
    v[m0.plus] = re(std::f64::consts::FRAC_1_SQRT_2);
    v[m0.minus] = re(std::f64::consts::FRAC_1_SQRT_2);
    Ok((linalg::projector(&v), projected_z(proj, spec)?))
}

fn coupled(osc: &OscillatorParams, cav: &CavityParams, drive: Option<&DissipationDrive>, spec: &ManifoldSpectrum) -> Result<CompositeModel> {
    let off = DissipationDrive::resonant(0.0);
    build_coupled_model(osc, cav, drive.unwrap_or(&off), spec)
}

/// `T_Z` from the Liouvillian mode dominating `Ô_Z`. Without a drive the exchange is set
/// to zero in the same composite space so both cases share one truncation.
pub fn bit_flip_time(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drive: Option<&DissipationDrive>,
    spec: &ManifoldSpectrum,
) -> Result<BitFlipTime> {
    let cm = coupled(osc, cav, drive, spec)?;
    let mode = dominant_decay_mode(&cm.model, &cm.observable_z(spec)?)?;
    Ok(BitFlipTime { tz: 1.0 / mode.rate, method: TzMethod::Spectral })
}

/// `T_Z` from an exponential fit of `⟨Z⟩(t)` starting in `|+Z⟩ ⊗ |0⟩`.
pub fn bit_flip_time_domain(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drive: Option<&DissipationDrive>,
    spec: &ManifoldSpectrum,
    times: &[f64],
) -> Result<BitFlipTime> {
    let cm = coupled(osc, cav, drive, spec)?;
    let (rho_osc, _) = z_pair(&cm.projection, spec)?;
    let rho0 = cm.with_cavity_vacuum(&rho_osc)?;
    let oz = cm.observable_z(spec)?;
    let states = evolve(&cm.model, &rho0, times)?;
    let z: Vec<f64> = states.iter().map(|s| linalg::trace(&(&oz * s.matrix())).re).collect();
    let fit = fit_exp(times, &z)?;
    Ok(BitFlipTime { tz: fit.get("tau").unwrap(), method: TzMethod::TimeDomain })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ScanModel {
    /// Oscillator ⊗ cavity.
    Full,
    /// Oscillator with adiabatically eliminated cavity.
    Effective,
}

/// `⟨Z⟩` after `duration` starting from `|+Z⟩` (with an empty cavity in the full model).
pub fn z_after(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drive: &DissipationDrive,
    spec: &ManifoldSpectrum,
    duration: f64,
    model: ScanModel,
) -> Result<f64> {
    match model {
        ScanModel::Full => {
            let cm = build_coupled_model(osc, cav, drive, spec)?;
            let (rho_osc, _) = z_pair(&cm.projection, spec)?;
            let rho0 = cm.with_cavity_vacuum(&rho_osc)?;
            let s = evolve(&cm.model, &rho0, &[duration])?;
            Ok(linalg::trace(&(&cm.observable_z(spec)? * s[0].matrix())).re)
        }
        ScanModel::Effective => {
            let (em, proj) = effective_model(osc, cav, drive, spec, spec.default_truncation())?;
            let (rho_osc, oz) = z_pair(&proj, spec)?;
            let rho0 = DensityState::new(rho_osc, BasisTag::Eigen, vec![proj.dim()])?;
            let s = evolve(&em, &rho0, &[duration])?;
            Ok(linalg::trace(&(&oz * s[0].matrix())).re)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScanSettings {
    pub delta: f64,
    pub eps2_grid: Vec<f64>,
    pub detunings: Vec<f64>,
    pub duration: f64,
    pub fock_dim: usize,
    pub model: ScanModel,
}

impl ThresholdScanSettings {
    /// Nine detunings over ±1 MHz, 50 µs of evolution, 45 Fock states.
    pub fn new(delta: f64, eps2_grid: Vec<f64>, model: ScanModel) -> Self {
        Self {
            delta,
            eps2_grid,
            detunings: (0..9).map(|k| TWO_PI * 1e6 * (-1.0 + 0.25 * k as f64)).collect(),
            duration: 50e-6,
            fock_dim: 45,
            model,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ThresholdRegime {
    SignChange,
    Saturation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScanResult {
    pub delta: f64,
    pub eps2_grid: Vec<f64>,
    pub detunings: Vec<f64>,
    /// `δ⟨Z⟩[ε₂][δω]` relative to the background detuning.
    pub delta_z: Vec<Vec<f64>>,
    /// Lorentzian peak value per row; `None` where the fit failed.
    pub peaks: Vec<Option<f64>>,
    pub row_errors: Vec<Option<String>>,
    pub eps2_th: Option<f64>,
    pub regime: Option<ThresholdRegime>,
}

impl ThresholdScanResult {
    pub fn threshold(&self) -> Result<(f64, ThresholdRegime)> {
        match (self.eps2_th, self.regime) {
            (Some(e), Some(r)) => Ok((e, r)),
            _ => Err(KerrcatError::NoThreshold),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps2_over_2pi_Hz,detuning_over_2pi_Hz,delta_z\n");
        for (e, row) in self.eps2_grid.iter().zip(&self.delta_z) {
            for (d, v) in self.detunings.iter().zip(row) {
                s.push_str(&format!("{},{},{}\n", e / TWO_PI, d / TWO_PI, v));
            }
        }
        s
    }
}

/// Sign change of the fitted peak, else the first row whose peak sinks below the
/// row's own spread. Rows whose fit failed are skipped when bracketing.
fn locate_threshold(grid: &[f64], peaks: &[Option<f64>], rows: &[Vec<f64>]) -> Option<(f64, ThresholdRegime)> {
    let fitted: Vec<(f64, f64)> = grid.iter().zip(peaks).filter_map(|(&x, p)| p.map(|p| (x, p))).collect();
    for w in fitted.windows(2) {
        let ((x0, a), (x1, b)) = (w[0], w[1]);
        if a < 0.0 && b >= 0.0 {
            return Some((x0 + (x1 - x0) * (-a) / (b - a), ThresholdRegime::SignChange));
        }
    }
    for (k, p) in peaks.iter().enumerate() {
        if let Some(p) = p {
            let row = &rows[k];
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64).sqrt();
            if p.abs() < sd {
                return Some((grid[k], ThresholdRegime::Saturation));
            }
        }
    }
    None
}

/// Relative change of `⟨Z⟩` after the evolution window versus dissipation detuning,
/// for each ε₂ on the grid; ε₂,th where the Lorentzian peak turns positive.
pub fn bit_flip_scan(
    osc: &OscillatorParams,
    cav: &CavityParams,
    g_diss: f64,
    settings: &ThresholdScanSettings,
) -> Result<ThresholdScanResult> {
    let spectra: Vec<(OscillatorParams, ManifoldSpectrum)> = settings
        .eps2_grid
        .par_iter()
        .map(|&e| {
            let p = OscillatorParams { eps2: e, delta: settings.delta, ..*osc };
            Ok((p, build_spectrum(&p, settings.fock_dim)?))
        })
        .collect::<Result<_>>()?;
    let mut dets = vec![BACKGROUND_DETUNING];
    dets.extend_from_slice(&settings.detunings);
    let jobs: Vec<(usize, usize)> = (0..spectra.len()).flat_map(|r| (0..dets.len()).map(move |d| (r, d))).collect();
    let values: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(r, d)| {
            let (p, s) = &spectra[r];
            let drive = DissipationDrive::resonant(g_diss).with_detuning(dets[d]);
            z_after(p, cav, &drive, s, settings.duration, settings.model)
        })
        .collect();
    let nd = dets.len();
    let mut delta_z = Vec::new();
    let mut peaks = Vec::new();
    let mut row_errors = Vec::new();
    let x_mhz: Vec<f64> = settings.detunings.iter().map(|d| d / TWO_PI / 1e6).collect();
    for r in 0..spectra.len() {
        let row: Result<Vec<f64>> = values[r * nd..(r + 1) * nd].iter().cloned().collect();
        let row = row?;
        let bg = row[0];
        let dz: Vec<f64> = row[1..].iter().map(|z| (z - bg) / bg).collect();
        match fit_lorentzian(&x_mhz, &dz) {
            Ok(f) => {
                peaks.push(Some(f.get("a").unwrap() + f.get("c").unwrap()));
                row_errors.push(None);
            }
            Err(e) => {
                log::warn!("eps2 row {r}: {e}");
                peaks.push(None);
                row_errors.push(Some(e.to_string()));
            }
        }
        delta_z.push(dz);
    }
    let found = locate_threshold(&settings.eps2_grid, &peaks, &delta_z);
    Ok(ThresholdScanResult {
        delta: settings.delta,
        eps2_grid: settings.eps2_grid.clone(),
        detunings: settings.detunings.clone(),
        delta_z,
        peaks,
        row_errors,
        eps2_th: found.map(|f| f.0),
        regime: found.map(|f| f.1),
    })
}

/// Decay rates of the Liouvillian modes dominating `Ô_X` and `Ô_Y`.
pub fn equator_decay_rates(
    osc: &OscillatorParams,
    cav: &CavityParams,
    drive: &DissipationDrive,
    spec: &ManifoldSpectrum,
) -> Result<[f64; 2]> {
    let cm = build_coupled_model(osc, cav, drive, spec)?;
    let m0 = spec.manifold(0)?;
    let n = cm.osc_dim();
    let mut ox = linalg::zeros(n, n);
    ox[(m0.plus, m0.plus)] = re(1.0);
    ox[(m0.minus, m0.minus)] = re(-1.0);
    let mut oy = linalg::zeros(n, n);
    oy[(m0.plus, m0.minus)] = c(0.0, -1.0);
    oy[(m0.minus, m0.plus)] = c(0.0, 1.0);
    let rx = dominant_decay_mode(&cm.model, &cm.embed_osc(&ox))?.rate;
    let ry = dominant_decay_mode(&cm.model, &cm.embed_osc(&oy))?.rate;
    Ok([rx, ry])
}

/// Effective rate acting inside manifold 0 relative to the resonant `1 → 0` channel.
pub fn sector_selectivity_ratio(cav: &CavityParams, drive: &DissipationDrive, spec: &ManifoldSpectrum) -> Result<f64> {
    let proj = EigenProjection::new(spec, spec.default_truncation())?;
    let ch = effective_channels(cav, drive, spec, &proj)?;
    let (s, t) = (drive.target.1, drive.target.0);
    let resonant = ch
        .iter()
        .find(|c| c.from == s && c.to == t)
        .ok_or_else(|| KerrcatError::InvalidModel("target transition has no matrix element".into()))?;
    let inner = ch
        .iter()
        .find(|c| c.from == t && c.to == t)
        .ok_or_else(|| KerrcatError::InvalidModel("manifold 0 has no internal matrix element".into()))?;
    Ok(inner.cooling_rate / resonant.cooling_rate)
}
