use rayon::prelude::*;
use serde_json::{json, Map, Value};

use super::config::{Diagnostic, RunConfig};
use super::CliError;
use crate::composite::{extract_kappa_diss, CavityParams, DissipationDrive};
use crate::dynamics::{BasisTag, DensityState};
use crate::fitting::GaussianInput;
use crate::hilbert::{square_grid, wigner_function};
use crate::protocols::*;
use crate::spectrum::{build_spectrum, isoline_first_crossing, kcq_basis_states, OscillatorParams, TWO_PI};

pub struct Context {
    pub cfg: RunConfig,
    pub seed: u64,
    pub fock_dim: Option<usize>,
}

/// What a runner hands back: the `results` block, CSV tables by file name and
/// convergence notes.
#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub tables: Vec<(String, String)>,
    pub diagnostics: Map<String, Value>,
}

type Run = Result<Outcome, CliError>;

impl Context {
    fn f(&self, key: &str) -> Result<f64, Diagnostic> {
        self.cfg.f64(key)
    }

    fn f_or(&self, key: &str, default: f64) -> Result<f64, Diagnostic> {
        if self.cfg.has(key) {
            self.cfg.f64(key)
        } else {
            Ok(default)
        }
    }

    fn w(&self, key: &str) -> Result<f64, Diagnostic> {
        self.cfg.angular(key)
    }

    fn n(&self, key: &str) -> Result<usize, Diagnostic> {
        self.cfg.usize(key)
    }

    fn dim(&self, default: usize) -> Result<usize, Diagnostic> {
        match self.fock_dim {
            Some(d) => Ok(d),
            None => self.cfg.usize_or("fock_dim", default),
        }
    }

    fn osc(&self) -> Result<OscillatorParams, Diagnostic> {
        let k = self.w("K_over_2pi_Hz")?;
        let t1 = self.f_or("T1_a_s", f64::INFINITY)?;
        Ok(OscillatorParams {
            k,
            eps2: self.f_or("eps2_over_K", 0.0)? * k,
            delta: self.f("delta_over_K")? * k,
            g3: self.w("g3_over_2pi_Hz")?,
            xi_zro: self.f("xi_zro")?,
            kappa_a: 1.0 / t1,
            n_th_a: self.f_or("n_th_a", 0.0)?,
            omit_stark: self.cfg.flag("omit_stark")?,
        })
    }

    fn cav(&self) -> Result<CavityParams, Diagnostic> {
        let mut c = CavityParams::new(self.w("kappa_b_out_Hz")?, self.w("kappa_b_loss_Hz")?, self.f("n_th_b")?, self.w("chi_ab_Hz")?);
        if self.cfg.has("cavity_dim") {
            c.cavity_dim = self.n("cavity_dim")?;
        }
        Ok(c)
    }

    fn rates(&self) -> Result<DecoherenceRates, Diagnostic> {
        Ok(DecoherenceRates::new(self.w("kappa1_01_Hz")?, self.w("kappa1_12_Hz")?, self.w("kappaphi_01_Hz")?, self.w("kappaphi_12_Hz")?)
            .with_heating_fraction(self.f("heating_fraction")?))
    }

    fn contrasts(&self) -> Result<ReadoutContrasts, Diagnostic> {
        Ok(ReadoutContrasts::new(self.f("M0")?, self.f("M1")?, self.f("M2")?, self.f("M3")?))
    }

    fn grid(&self, lo: &str, hi: &str, n: &str, scale: f64) -> Result<Vec<f64>, Diagnostic> {
        Ok(linspace(self.f(lo)? * scale, self.f(hi)? * scale, self.n(n)?))
    }

    fn shape(&self) -> Result<PulseShape, Diagnostic> {
        Ok(PulseShape { duration: self.f("pulse_duration_s")?, sigma: self.f("pulse_sigma_s")?, ..PulseShape::default() })
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn hz(w: f64) -> f64 {
    w / TWO_PI
}

pub fn spectrum(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let dim = ctx.dim(45)?;
    let s = build_spectrum(&p, dim)?;
    let rows: Vec<Vec<f64>> = s
        .manifolds
        .iter()
        .enumerate()
        .map(|(i, m)| vec![i as f64, hz(m.splitting), hz(m.mean_energy), m.mean_photon])
        .collect();
    let mut out = Outcome {
        results: json!({
            "omega01_over_2pi_Hz": hz(s.transition(0, 1)?),
            "omega12_over_2pi_Hz": hz(s.transition(1, 2)?),
            "splittings_over_h_Hz": s.manifolds.iter().map(|m| hz(m.splitting)).collect::<Vec<_>>(),
            "mean_photons": s.manifolds.iter().map(|m| m.mean_photon).collect::<Vec<_>>(),
            "confined_count": s.confined_count,
            "stark_shift_over_2pi_Hz": hz(p.stark_shift()),
        }),
        tables: vec![
            ("states.csv".into(), s.to_csv()),
            ("manifolds.csv".into(), csv(&["manifold", "splitting_over_h_Hz", "mean_energy_over_h_Hz", "mean_photon"], rows)),
        ],
        ..Default::default()
    };
    out.diagnostics.insert("fock_dim".into(), json!(dim));
    if ctx.cfg.has("isoline_Hz") {
        let target = ctx.w("isoline_Hz")?;
        let manifold = ctx.n("isoline_manifold")?;
        let deltas = ctx.grid("delta_min_over_K", "delta_max_over_K", "delta_points", p.k)?;
        let eps = ctx.grid("eps2_min_over_K", "eps2_max_over_K", "eps2_points", p.k)?;
        let found: Vec<Option<f64>> = deltas
            .par_iter()
            .map(|&d| isoline_first_crossing(target, d, &p, manifold, &eps, dim).ok().map(|e| e / p.k))
            .collect();
        let rows = deltas.iter().zip(&found).map(|(d, e)| vec![d / p.k, e.unwrap_or(f64::NAN)]);
        out.tables.push(("isoline.csv".into(), csv(&["delta_over_K", "eps2_over_K"], rows)));
        out.results["isoline"] = json!({
            "level_over_h_Hz": hz(target),
            "manifold": manifold,
            "delta_over_K": deltas.iter().map(|d| d / p.k).collect::<Vec<_>>(),
            "eps2_over_K": found,
        });
    }
    Ok(out)
}

pub fn wigner(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let dim = ctx.dim(45)?;
    let s = build_spectrum(&p, dim)?;
    let b = kcq_basis_states(&s)?;
    let name = ctx.cfg.text("state")?;
    let psi = match name {
        "plus_z" => b.plus_z,
        "minus_z" => b.minus_z,
        "plus_x" => b.plus_x,
        "minus_x" => b.minus_x,
        "plus_y" => b.plus_y,
        _ => b.minus_y,
    };
    let rho = DensityState::pure(&psi, BasisTag::Fock, vec![dim])?;
    let grid = square_grid(ctx.f("grid_half")?, ctx.n("grid_points")?);
    let w = wigner_function(&rho, &grid)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in &w {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let rows = grid.iter().zip(&w).map(|(g, v)| vec![g.re, g.im, *v]);
    Ok(Outcome {
        results: json!({ "state": name, "min": lo, "max": hi, "points": w.len() }),
        tables: vec![("wigner.csv".into(), csv(&["beta_re", "beta_im", "W"], rows))],
        ..Default::default()
    })
}

pub fn steady_leakage(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let cav = ctx.cav()?;
    let dim = ctx.dim(45)?;
    let s = build_spectrum(&p, dim)?;
    let single = crate::protocols::steady_leakage(&p, &s)?;
    let gs = ctx.grid("g_min_Hz", "g_max_Hz", "g_points", TWO_PI)?;
    let drives: Vec<DissipationDrive> = gs.iter().map(|&g| DissipationDrive::resonant(g)).collect();
    let pts = steady_leakage_vs_dissipation(&p, &cav, &drives, &s, ctx.f("tau_delay_s")?)?;
    let rows = pts.iter().map(|q| vec![hz(q.g_diss), q.p0, q.p1, q.p2]);
    let mut out = Outcome {
        results: json!({
            "single_mode": { "p0": single[0], "p1": single[1], "p2": single[2] },
            "points": pts.iter().map(|q| json!({"g_diss_over_2pi_Hz": hz(q.g_diss), "p0": q.p0, "p1": q.p1, "p2": q.p2})).collect::<Vec<_>>(),
        }),
        tables: vec![("leakage.csv".into(), csv(&["g_diss_over_2pi_Hz", "p0", "p1", "p2"], rows))],
        ..Default::default()
    };
    out.diagnostics.insert("truncation".into(), json!(s.default_truncation()));
    out.diagnostics.insert("cavity_dim".into(), json!(cav.cavity_dim));
    Ok(out)
}

pub fn kappa_diss(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let cav = ctx.cav()?;
    let s = build_spectrum(&p, ctx.dim(45)?)?;
    let gs: Vec<f64> = ctx.grid("g_min_Hz", "g_max_Hz", "g_points", TWO_PI)?.into_iter().filter(|g| *g > 0.0).collect();
    let k: Vec<f64> = gs
        .par_iter()
        .map(|&g| extract_kappa_diss(&p, &cav, &DissipationDrive::resonant(g), &s))
        .collect::<crate::Result<_>>()?;
    let kb = cav.kappa_b();
    let rows = gs.iter().zip(&k).map(|(g, k)| vec![hz(*g), hz(*k), hz(4.0 * g * g / kb)]);
    Ok(Outcome {
        results: json!({
            "g_diss_over_2pi_Hz": gs.iter().map(|g| hz(*g)).collect::<Vec<_>>(),
            "kappa_diss_over_2pi_Hz": k.iter().map(|k| hz(*k)).collect::<Vec<_>>(),
            "kappa_b_over_2pi_Hz": hz(kb),
        }),
        tables: vec![("kappa_diss.csv".into(), csv(&["g_diss_over_2pi_Hz", "kappa_diss_over_2pi_Hz", "golden_rule_over_2pi_Hz"], rows))],
        ..Default::default()
    })
}

pub fn rabi_contrast(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let cav = ctx.cav()?;
    let s = build_spectrum(&p, ctx.dim(45)?)?;
    let rates = ctx.rates()?;
    let truth = PopulationEstimate::exact(ctx.f("p1")?, ctx.f("p2")?);
    let shape = ctx.shape()?;
    let amps = linspace(0.0, ctx.f("amp_max")?, ctx.n("amp_points")?);
    let traces = rabi_contrast_protocol(&p, &cav, &s, &rates, &truth, &shape, &amps)?;
    let model = ManifoldModel::from_spectrum(&s, rates)?;
    let p2 = GaussianInput::new(truth.p2, ctx.f("p2_sigma")?);
    let n_mc = ctx.n("n_mc")?;
    let ratio = fit_leakage_population(&traces, &model, &shape, p2, LeakageFitMode::AmplitudeRatio, n_mc, ctx.seed)?;
    let full = fit_leakage_population(&traces, &model, &shape, p2, LeakageFitMode::FullModel, n_mc, ctx.seed)?;
    let rows = (0..amps.len()).map(|k| vec![amps[k], traces.with_pi[k], traces.without_pi[k]]);
    Ok(Outcome {
        results: json!({
            "true_p1": truth.p1,
            "p1_amplitude_ratio": ratio.p1, "sigma_p1_amplitude_ratio": ratio.sigma1,
            "p1_full_model": full.p1, "sigma_p1_full_model": full.sigma1,
        }),
        tables: vec![("rabi.csv".into(), csv(&["amplitude", "with_pi01", "without_pi01"], rows))],
        ..Default::default()
    })
}

pub fn coherence_signals(ctx: &Context) -> Run {
    let rates = ctx.rates()?;
    let c = ctx.contrasts()?;
    let dw = ctx.w("ramsey_detuning_Hz")?;
    let ts = linspace(0.0, ctx.f("t_max_s")?, ctx.n("t_points")?);
    let exact = manifold_coherence_signals(&rates, &c, dw, &ts)?;
    let num = simulate_coherence_experiments(&ManifoldModel::ideal(rates), &c, dw, &ts)?;
    let dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let worst = [
        dev(&exact.t1_01, &num.t1_01),
        dev(&exact.tphi_01, &num.tphi_01),
        dev(&exact.t1_12, &num.t1_12),
        dev(&exact.tphi_12, &num.tphi_12),
    ];
    let rows = (0..ts.len()).map(|k| {
        vec![ts[k], exact.t1_01[k], num.t1_01[k], exact.tphi_01[k], num.tphi_01[k], exact.t1_12[k], num.t1_12[k], exact.tphi_12[k], num.tphi_12[k]]
    });
    let header = ["t_s", "t1_01", "t1_01_numeric", "tphi_01", "tphi_01_numeric", "t1_12", "t1_12_numeric", "tphi_12", "tphi_12_numeric"];
    let mut out = Outcome {
        results: json!({ "max_deviation": { "t1_01": worst[0], "tphi_01": worst[1], "t1_12": worst[2], "tphi_12": worst[3] } }),
        tables: vec![("signals.csv".into(), csv(&header, rows))],
        ..Default::default()
    };
    if rates.kup_01 > 0.0 || rates.kup_12 > 0.0 {
        out.diagnostics.insert("note".into(), json!("closed forms omit excitation; deviations reflect the heating"));
    }
    Ok(out)
}

pub fn spectroscopy_invert(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let s = build_spectrum(&p, ctx.dim(45)?)?;
    let rc = cavity_readout_model(&ctx.cav()?, &s, ctx.w("probe_offset_Hz")?)?;
    let g = |m: &str, sg: &str| -> Result<GaussianInput, Diagnostic> { Ok(GaussianInput::new(ctx.f(m)? * 1e-3, ctx.f(sg)? * 1e-3)) };
    let peaks = [g("dpk01_mrad", "sigma01_mrad")?, g("dpk12_mrad", "sigma12_mrad")?, g("dpk23_mrad", "sigma23_mrad")?];
    let n = ctx.cfg.usize_or("n_mc", 2000)?;
    let est = spectroscopy_inversion(&peaks, &rc, n.max(100), ctx.seed)?;
    Ok(Outcome {
        results: json!({
            "contrasts_rad": rc.as_array(),
            "eta12": rc.eta(1, 2), "eta23": rc.eta(2, 3),
            "populations": est.as_array(),
            "sigmas": [est.sigma0, est.sigma1, est.sigma2],
        }),
        ..Default::default()
    })
}

pub fn tz_scan(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let cav = ctx.cav()?;
    let dim = ctx.dim(45)?;
    let drive = DissipationDrive::resonant(ctx.w("g_diss_Hz")?).with_detuning(ctx.w("dissipation_detuning_Hz")?);
    let eps = ctx.grid("eps2_min_over_K", "eps2_max_over_K", "eps2_points", p.k)?;
    let rows: Vec<(f64, f64, f64)> = eps
        .par_iter()
        .map(|&e| {
            let q = OscillatorParams { eps2: e, ..p };
            let s = build_spectrum(&q, dim)?;
            let off = bit_flip_time(&q, &cav, None, &s)?.tz;
            let on = bit_flip_time(&q, &cav, Some(&drive), &s)?.tz;
            Ok((e / p.k, off, on))
        })
        .collect::<crate::Result<_>>()?;
    Ok(Outcome {
        results: json!({
            "eps2_over_K": rows.iter().map(|r| r.0).collect::<Vec<_>>(),
            "tz_without_s": rows.iter().map(|r| r.1).collect::<Vec<_>>(),
            "tz_with_s": rows.iter().map(|r| r.2).collect::<Vec<_>>(),
        }),
        tables: vec![("tz.csv".into(), csv(&["eps2_over_K", "tz_without_s", "tz_with_s"], rows.iter().map(|r| vec![r.0, r.1, r.2])))],
        ..Default::default()
    })
}

pub fn eps2_threshold(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let cav = ctx.cav()?;
    let model = if ctx.cfg.text("model")? == "effective" { ScanModel::Effective } else { ScanModel::Full };
    let eps = ctx.grid("eps2_min_over_K", "eps2_max_over_K", "eps2_points", p.k)?;
    let span = ctx.w("detuning_span_Hz")?;
    let mut settings = ThresholdScanSettings::new(p.delta, eps.clone(), model);
    settings.detunings = linspace(-span, span, ctx.n("detuning_points")?);
    settings.duration = ctx.f("duration_s")?;
    settings.fock_dim = ctx.dim(45)?;
    let r = bit_flip_scan(&p, &cav, ctx.w("g_diss_Hz")?, &settings)?;
    let mut results = json!({
        "delta_over_K": p.delta / p.k,
        "eps2_over_K": eps.iter().map(|e| e / p.k).collect::<Vec<_>>(),
        "peaks": r.peaks,
        "row_errors": r.row_errors,
        "eps2_th_over_K": r.eps2_th.map(|e| e / p.k),
        "regime": r.regime,
    });
    if ctx.cfg.has("isoline_Hz") {
        let iso = isoline_first_crossing(ctx.w("isoline_Hz")?, p.delta, &p, 1, &eps, settings.fock_dim).ok();
        results["isoline_eps2_over_K"] = json!(iso.map(|e| e / p.k));
        if let (Some(i), Some(t)) = (iso, r.eps2_th) {
            results["threshold_vs_isoline"] = json!(t / i - 1.0);
        }
    }
    let mut out = Outcome { results, tables: vec![("delta_z.csv".into(), r.to_csv())], ..Default::default() };
    out.diagnostics.insert("model".into(), json!(model));
    if r.eps2_th.is_none() {
        out.diagnostics.insert("threshold".into(), json!("no sign change or saturation on the grid"));
    }
    Ok(out)
}

pub fn init_ramp(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let dim = ctx.dim(45)?;
    let er = RampProfile::gaussian_rise(ctx.f("eps2_ramp_s")?, ctx.f("eps2_sigma_s")?, p.eps2);
    let dr = RampProfile::gaussian_rise(ctx.f("delta_ramp_s")?, ctx.f("delta_sigma_s")?, p.delta);
    let (with, without) = rayon::join(|| initialization_ramp(&p, &er, &dr, true, dim), || initialization_ramp(&p, &er, &dr, false, dim));
    let (with, without) = (with?, without?);
    let mut out = Outcome {
        results: json!({ "fidelity_with_detuning_ramp": with.fidelity, "fidelity_without_detuning_ramp": without.fidelity }),
        ..Default::default()
    };
    out.diagnostics.insert("dt_s".into(), json!([with.steps_dt, without.steps_dt]));
    Ok(out)
}

pub fn gate_fidelity(ctx: &Context) -> Run {
    let p = ctx.osc()?;
    let s = build_spectrum(&p, ctx.dim(30)?)?;
    let (k1, kp) = (ctx.w("kappa1_eff_Hz")?, ctx.w("kappaphi_eff_Hz")?);
    let taus = linspace(ctx.f("tau_min_s")?, ctx.f("tau_max_s")?, ctx.n("tau_points")?);
    let fid: Vec<f64> = taus.iter().map(|&t| kerr_gate_fidelity(p.k, k1, kp, t, &s)).collect::<crate::Result<_>>()?;
    let z = z_gate_error(1.0 / ctx.f("z_gamma_inv_s")?, ctx.f("z_tau_s")?);
    Ok(Outcome {
        results: json!({ "tau_s": taus, "kerr_gate_fidelity": fid, "z_gate_error": z }),
        tables: vec![("gate.csv".into(), csv(&["tau_s", "fidelity"], taus.iter().zip(&fid).map(|(t, f)| vec![*t, *f])))],
        ..Default::default()
    })
}

pub fn zro_fidelity(ctx: &Context) -> Run {
    let sigma = ctx.f("zro_sigma")?;
    let (a, b) = synthetic_zro_shots(ctx.n("zro_shots")?, ctx.f("zro_separation")? * sigma, sigma, ctx.f("zro_flip")?, ctx.seed)?;
    let m = zro_fidelity_qnd(&a, &b, ctx.f("zro_threshold")?)?;
    Ok(Outcome { results: serde_json::to_value(m).expect("plain struct"), ..Default::default() })
}

pub fn robustness(ctx: &Context) -> Run {
    let rates = ctx.rates()?.with_heating_fraction(ctx.f_or("heating_fraction", 0.1)?);
    let settings = RobustnessSettings {
        dw: ctx.w("ramsey_detuning_Hz")?,
        p2: GaussianInput::new(ctx.f_or("p2", 0.01)?, ctx.f_or("p2_sigma", 0.003)?),
        n_mc: ctx.n("n_mc")?,
        seed: ctx.seed,
        shape: ctx.shape()?,
        amplitudes: linspace(0.0, ctx.f("amp_max")?, ctx.n("amp_points")?),
    };
    let rep = excitation_robustness_study(&rates, &ctx.contrasts()?, &settings)?;
    let names = ["kappa1_01", "kappaphi_01", "kappa1_12", "kappaphi_12"];
    let fitted = [rep.fitted_rates.k1_01, rep.fitted_rates.kphi_01, rep.fitted_rates.k1_12, rep.fitted_rates.kphi_12];
    let truth = [rep.true_rates.k1_01, rep.true_rates.kphi_01, rep.true_rates.k1_12, rep.true_rates.kphi_12];
    let rows = (0..4).map(|i| vec![i as f64, hz(truth[i]), hz(fitted[i]), rep.relative_errors[i]]);
    Ok(Outcome {
        results: json!({
            "rates": names.iter().enumerate().map(|(i, n)| json!({
                "name": n, "true_over_2pi_Hz": hz(truth[i]), "fitted_over_2pi_Hz": hz(fitted[i]), "relative_error": rep.relative_errors[i],
            })).collect::<Vec<_>>(),
            "true_populations": rep.true_populations,
            "p1_amplitude_ratio": rep.by_ratio.p1, "sigma_p1_amplitude_ratio": rep.by_ratio.sigma1,
            "p1_full_model": rep.by_model.p1, "sigma_p1_full_model": rep.by_model.sigma1,
        }),
        tables: vec![("rates.csv".into(), csv(&["index", "true_over_2pi_Hz", "fitted_over_2pi_Hz", "relative_error"], rows))],
        ..Default::default()
    })
}
