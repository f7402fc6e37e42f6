use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::registry::{find_experiment, Experiment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyKind {
    /// Strictly positive real.
    Positive,
    NonNegative,
    /// Any finite real; signed frequencies such as g₃ or detunings.
    Real,
    /// Integer ≥ 1.
    Count,
    /// Integer ≥ 0.
    Index,
    Flag,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: KeyKind,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: KeyKind, default: Option<&'static str>, help: &'static str) -> KeySpec {
    KeySpec { name, kind, default, help }
}

use KeyKind::*;

/// Every key any experiment understands. Frequencies ending in `_Hz` are values over 2π.
pub static KEYS: &[KeySpec] = &[
    key("experiment", Choice(&[]), None, "registry name"),
    key("seed", Index, Some("7"), "seed for Monte-Carlo and synthetic data"),
    key("fock_dim", Count, None, "Fock truncation"),
    key("K_over_2pi_Hz", Positive, None, "Kerr nonlinearity"),
    key("eps2_over_K", NonNegative, None, "two-photon drive in units of K"),
    key("delta_over_K", Real, None, "squeezing-drive detuning in units of K"),
    key("g3_over_2pi_Hz", Real, None, "third-order nonlinearity (sets the Stark shift)"),
    key("T1_a_s", Positive, None, "oscillator single-photon lifetime"),
    key("n_th_a", NonNegative, None, "oscillator thermal occupation"),
    key("xi_zro", NonNegative, Some("0"), "readout-pump displacement"),
    key("omit_stark", Flag, Some("false"), "drop the squeeze-induced Stark shift"),
    key("kappa_b_out_Hz", Positive, None, "cavity output coupling"),
    key("kappa_b_loss_Hz", NonNegative, None, "cavity internal loss"),
    key("chi_ab_Hz", Real, None, "oscillator-cavity cross-Kerr"),
    key("n_th_b", NonNegative, None, "cavity thermal occupation"),
    key("cavity_dim", Count, None, "cavity truncation (default 3 when hot, else 2)"),
    key("g_diss_Hz", NonNegative, None, "exchange coupling"),
    key("dissipation_detuning_Hz", Real, Some("0"), "exchange detuning from the 0-1 transition"),
    key("g_min_Hz", NonNegative, Some("0"), "coupling grid start"),
    key("g_max_Hz", Positive, Some("200e3"), "coupling grid end"),
    key("g_points", Count, Some("9"), "coupling grid size"),
    key("tau_delay_s", NonNegative, Some("4.2e-6"), "free evolution before populations are read"),
    key("kappa1_01_Hz", NonNegative, None, "0-1 relaxation"),
    key("kappa1_12_Hz", NonNegative, None, "1-2 relaxation"),
    key("kappaphi_01_Hz", NonNegative, None, "0-1 pure dephasing"),
    key("kappaphi_12_Hz", NonNegative, None, "1-2 pure dephasing"),
    key("heating_fraction", NonNegative, Some("0"), "excitation rate over relaxation rate"),
    key("M0", Real, Some("0"), "readout value of manifold 0"),
    key("M1", Real, Some("1"), "readout value of manifold 1"),
    key("M2", Real, Some("1.78"), "readout value of manifold 2"),
    key("M3", Real, Some("2.3"), "readout value of manifold 3"),
    key("ramsey_detuning_Hz", Real, Some("200e3"), "Ramsey precession"),
    key("t_max_s", Positive, Some("40e-6"), "signal window"),
    key("t_points", Count, Some("201"), "signal samples"),
    key("p1", NonNegative, None, "true manifold-1 population"),
    key("p2", NonNegative, None, "manifold-2 population"),
    key("p2_sigma", NonNegative, Some("0"), "uncertainty on p2"),
    key("amp_max", Positive, Some("2"), "largest Rabi amplitude in units of the pi-pulse"),
    key("amp_points", Count, Some("41"), "Rabi amplitude samples"),
    key("pulse_duration_s", Positive, Some("2e-6"), "Gaussian pulse length"),
    key("pulse_sigma_s", Positive, Some("332e-9"), "Gaussian pulse width"),
    key("n_mc", Count, Some("200"), "Monte-Carlo samples"),
    key("dpk01_mrad", Real, None, "spectroscopy peak 0-1"),
    key("dpk12_mrad", Real, None, "spectroscopy peak 1-2"),
    key("dpk23_mrad", Real, None, "spectroscopy peak 2-3"),
    key("sigma01_mrad", NonNegative, None, "uncertainty of peak 0-1"),
    key("sigma12_mrad", NonNegative, None, "uncertainty of peak 1-2"),
    key("sigma23_mrad", NonNegative, None, "uncertainty of peak 2-3"),
    key("probe_offset_Hz", Real, Some("0"), "probe detuning from the manifold-0 resonance"),
    key("eps2_min_over_K", NonNegative, Some("0.5"), "eps2 grid start"),
    key("eps2_max_over_K", Positive, Some("3.5"), "eps2 grid end"),
    key("eps2_points", Count, Some("12"), "eps2 grid size"),
    key("detuning_span_Hz", Positive, Some("1e6"), "half-width of the dissipation detuning scan"),
    key("detuning_points", Count, Some("9"), "dissipation detuning samples"),
    key("duration_s", Positive, Some("50e-6"), "evolution window"),
    key("model", Choice(&["full", "effective"]), Some("full"), "full composite or adiabatically eliminated cavity"),
    key("isoline_Hz", Positive, None, "splitting isoline level"),
    key("isoline_manifold", Count, Some("1"), "manifold of the isoline"),
    key("delta_min_over_K", Real, Some("1"), "isoline detuning grid start"),
    key("delta_max_over_K", Real, Some("8"), "isoline detuning grid end"),
    key("delta_points", Count, Some("8"), "isoline detuning grid size"),
    key("state", Choice(&["plus_z", "minus_z", "plus_x", "minus_x", "plus_y", "minus_y"]), Some("plus_z"), "cat state"),
    key("grid_half", Positive, Some("3"), "phase-space half-width"),
    key("grid_points", Count, Some("61"), "phase-space points per axis"),
    key("eps2_ramp_s", Positive, Some("1e-6"), "eps2 ramp length"),
    key("eps2_sigma_s", Positive, Some("200e-9"), "eps2 ramp width"),
    key("delta_ramp_s", Positive, Some("5.6e-6"), "detuning ramp length"),
    key("delta_sigma_s", Positive, Some("1.12e-6"), "detuning ramp width"),
    key("kappa1_eff_Hz", NonNegative, None, "gate-point single-photon loss"),
    key("kappaphi_eff_Hz", NonNegative, None, "gate-point dephasing"),
    key("tau_min_s", NonNegative, Some("140e-9"), "gate duration grid start"),
    key("tau_max_s", NonNegative, Some("144e-9"), "gate duration grid end"),
    key("tau_points", Count, Some("2"), "gate duration grid size"),
    key("z_gamma_inv_s", Positive, Some("2.91e-6"), "1/gamma of the Z-drive Rabi decay"),
    key("z_tau_s", NonNegative, Some("100e-9"), "Z-gate duration"),
    key("zro_shots", Count, Some("100000"), "synthetic readout shots"),
    key("zro_separation", Positive, Some("10"), "cluster separation in units of sigma"),
    key("zro_sigma", Positive, Some("1"), "cluster width"),
    key("zro_flip", NonNegative, Some("0.0029"), "state-flip probability between readouts"),
    key("zro_threshold", Real, Some("0"), "classification threshold"),
];

pub fn key_spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub key: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub(crate) fn error(key: Option<&str>, message: impl Into<String>) -> Self {
        Self { level: Level::Error, key: key.map(str::to_string), message: message.into() }
    }

    fn warning(key: &str, message: impl Into<String>) -> Self {
        Self { level: Level::Warning, key: Some(key.to_string()), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.level {
            Level::Error => "error",
            Level::Warning => "warning",
        };
        match &self.key {
            Some(k) => write!(f, "{tag}: `{k}`: {}", self.message),
            None => write!(f, "{tag}: {}", self.message),
        }
    }
}

/// Flat `key = value` file. `#`/`;` start comments; `[section]` lines are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, Vec<Diagnostic>> {
        let mut entries = BTreeMap::new();
        let mut errors = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(Diagnostic::error(None, format!("line {}: expected `key = value`", no + 1)));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                errors.push(Diagnostic::error(None, format!("line {}: empty key or value", no + 1)));
            } else if entries.insert(k.to_string(), v.to_string()).is_some() {
                errors.push(Diagnostic::error(Some(k), format!("line {}: duplicate key", no + 1)));
            }
        }
        if errors.is_empty() {
            Ok(Self { entries })
        } else {
            Err(errors)
        }
    }

    pub fn load(path: &Path) -> std::result::Result<Self, Vec<Diagnostic>> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| vec![Diagnostic::error(None, format!("cannot read {}: {e}", path.display()))])?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn experiment(&self) -> Option<&str> {
        self.entries.get("experiment").map(String::as_str)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str).or_else(|| key_spec(key).and_then(|k| k.default))
    }

    pub fn has(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    pub fn f64(&self, key: &str) -> std::result::Result<f64, Diagnostic> {
        let v = self.raw(key).ok_or_else(|| Diagnostic::error(Some(key), "missing required key"))?;
        v.parse::<f64>().map_err(|_| Diagnostic::error(Some(key), format!("`{v}` is not a number")))
    }

    /// Value over 2π in Hz, returned as an angular rate.
    pub fn angular(&self, key: &str) -> std::result::Result<f64, Diagnostic> {
        Ok(self.f64(key)? * crate::spectrum::TWO_PI)
    }

    pub fn usize(&self, key: &str) -> std::result::Result<usize, Diagnostic> {
        let v = self.raw(key).ok_or_else(|| Diagnostic::error(Some(key), "missing required key"))?;
        v.parse::<usize>().map_err(|_| Diagnostic::error(Some(key), format!("`{v}` is not a non-negative integer")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> std::result::Result<usize, Diagnostic> {
        if self.has(key) {
            self.usize(key)
        } else {
            Ok(default)
        }
    }

    pub fn flag(&self, key: &str) -> std::result::Result<bool, Diagnostic> {
        match self.raw(key) {
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") | None => Ok(false),
            Some(v) => Err(Diagnostic::error(Some(key), format!("`{v}` is not a boolean"))),
        }
    }

    pub fn text(&self, key: &str) -> std::result::Result<&str, Diagnostic> {
        self.raw(key).ok_or_else(|| Diagnostic::error(Some(key), "missing required key"))
    }
}

fn check_value(spec: &KeySpec, v: &str) -> Option<String> {
    let num = || v.parse::<f64>().ok().filter(|x| x.is_finite());
    match spec.kind {
        Positive => match num() {
            Some(x) if x > 0.0 => None,
            Some(x) => Some(format!("must be > 0, got {x}")),
            None => Some(format!("`{v}` is not a finite number")),
        },
        NonNegative => match num() {
            Some(x) if x >= 0.0 => None,
            Some(x) => Some(format!("must be >= 0, got {x}")),
            None => Some(format!("`{v}` is not a finite number")),
        },
        Real => num().is_none().then(|| format!("`{v}` is not a finite number")),
        Count => match v.parse::<usize>() {
            Ok(n) if n >= 1 => None,
            _ => Some(format!("`{v}` is not a positive integer")),
        },
        Index => v.parse::<u64>().is_err().then(|| format!("`{v}` is not a non-negative integer")),
        Flag => (!matches!(v, "true" | "false" | "yes" | "no" | "1" | "0")).then(|| format!("`{v}` is not a boolean")),
        Choice(opts) if opts.is_empty() => None,
        Choice(opts) => (!opts.contains(&v)).then(|| format!("`{v}` is not one of {}", opts.join(", "))),
    }
}

fn suggestion<'a>(key: &str, allowed: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    allowed
        .map(|k| (strsim::jaro_winkler(&key.to_lowercase(), &k.to_lowercase()), k))
        .filter(|(s, _)| *s > 0.8)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k)
}

/// Every check short of running: experiment name, required keys, value ranges,
/// and extraneous keys (warned with the closest allowed name).
pub fn validate(cfg: &RunConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let exp: Option<&Experiment> = match cfg.experiment() {
        None => {
            out.push(Diagnostic::error(Some("experiment"), "missing required key"));
            None
        }
        Some(name) => {
            let e = find_experiment(name);
            if e.is_none() {
                out.push(Diagnostic::error(Some("experiment"), format!("unknown experiment `{name}`")));
            }
            e
        }
    };
    if let Some(e) = exp {
        for k in e.required_keys() {
            if !cfg.entries.contains_key(k) {
                out.push(Diagnostic::error(Some(k), "missing required key"));
            }
        }
    }
    for (k, v) in &cfg.entries {
        let allowed = exp.map(|e| e.accepts(k)).unwrap_or(true);
        match key_spec(k) {
            Some(spec) if allowed => {
                if let Some(msg) = check_value(spec, v) {
                    out.push(Diagnostic::error(Some(k), msg));
                }
            }
            _ => {
                let pool: Vec<&str> = match exp {
                    Some(e) => e.allowed_keys().collect(),
                    None => KEYS.iter().map(|s| s.name).collect(),
                };
                let msg = match suggestion(k, pool.into_iter()) {
                    Some(s) => format!("unknown key; did you mean `{s}`?"),
                    None => "unknown key".to_string(),
                };
                out.push(Diagnostic::warning(k, msg));
            }
        }
    }
    out
}
