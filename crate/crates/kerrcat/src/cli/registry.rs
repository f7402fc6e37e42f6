use super::experiments as run;
use super::experiments::{Context, Outcome};
use super::CliError;

const OSC: &[&str] = &["K_over_2pi_Hz", "eps2_over_K", "delta_over_K", "g3_over_2pi_Hz", "T1_a_s", "n_th_a"];
const OSC_OPT: &[&str] = &["xi_zro", "omit_stark", "fock_dim"];
const HAMILTONIAN: &[&str] = &["K_over_2pi_Hz", "eps2_over_K", "delta_over_K", "g3_over_2pi_Hz"];
const CAV: &[&str] = &["kappa_b_out_Hz", "kappa_b_loss_Hz", "chi_ab_Hz", "n_th_b"];
const RATES: &[&str] = &["kappa1_01_Hz", "kappa1_12_Hz", "kappaphi_01_Hz", "kappaphi_12_Hz"];
const CONTRASTS: &[&str] = &["M0", "M1", "M2", "M3"];
const G_GRID: &[&str] = &["g_min_Hz", "g_max_Hz", "g_points"];
const EPS2_GRID: &[&str] = &["eps2_min_over_K", "eps2_max_over_K", "eps2_points"];
const PULSE: &[&str] = &["amp_max", "amp_points", "pulse_duration_s", "pulse_sigma_s", "n_mc"];

pub type Runner = fn(&Context) -> Result<Outcome, CliError>;

pub struct Experiment {
    pub name: &'static str,
    pub figure: &'static str,
    pub summary: &'static str,
    required: &'static [&'static [&'static str]],
    optional: &'static [&'static [&'static str]],
    pub run: Runner,
}

impl Experiment {
    pub fn required_keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.required.iter().flat_map(|g| g.iter().copied())
    }

    pub fn allowed_keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        ["experiment", "seed"].into_iter().chain(self.required_keys()).chain(self.optional.iter().flat_map(|g| g.iter().copied()))
    }

    pub fn accepts(&self, key: &str) -> bool {
        self.allowed_keys().any(|k| k == key)
    }
}

/// Listing order is the order here.
pub static REGISTRY: &[Experiment] = &[
    Experiment {
        name: "spectrum",
        figure: "Fig. 1c",
        summary: "manifold energies, splittings and photon numbers; optional splitting isoline",
        required: &[HAMILTONIAN],
        optional: &[OSC_OPT, &["T1_a_s", "n_th_a", "isoline_Hz", "isoline_manifold", "delta_min_over_K", "delta_max_over_K", "delta_points"], EPS2_GRID],
        run: run::spectrum,
    },
    Experiment {
        name: "wigner",
        figure: "Fig. 1d",
        summary: "Wigner function of a cat state on a square grid",
        required: &[HAMILTONIAN],
        optional: &[OSC_OPT, &["T1_a_s", "n_th_a", "state", "grid_half", "grid_points"]],
        run: run::wigner,
    },
    Experiment {
        name: "steady-leakage",
        figure: "Fig. 3b",
        summary: "steady manifold populations versus exchange coupling",
        required: &[OSC, CAV],
        optional: &[OSC_OPT, &["cavity_dim", "tau_delay_s"], G_GRID],
        run: run::steady_leakage,
    },
    Experiment {
        name: "kappa-diss",
        figure: "Fig. S8d",
        summary: "engineered dissipation rate from the 1/e decay of manifold 1",
        required: &[OSC, CAV],
        optional: &[OSC_OPT, &["cavity_dim"], G_GRID],
        run: run::kappa_diss,
    },
    Experiment {
        name: "rabi-contrast",
        figure: "Fig. 2c",
        summary: "1-2 Rabi traces with and without a 0-1 pi pulse, and the fitted p1",
        required: &[OSC, CAV, RATES, &["p1", "p2"]],
        optional: &[OSC_OPT, PULSE, &["p2_sigma", "heating_fraction"]],
        run: run::rabi_contrast,
    },
    Experiment {
        name: "coherence-signals",
        figure: "Fig. 2e-h",
        summary: "relaxation and Ramsey signals of manifolds 1 and 2, closed form and numeric",
        required: &[RATES],
        optional: &[CONTRASTS, &["ramsey_detuning_Hz", "t_max_s", "t_points"]],
        run: run::coherence_signals,
    },
    Experiment {
        name: "spectroscopy-invert",
        figure: "Fig. S7",
        summary: "manifold populations from incoherent spectroscopy peaks",
        required: &[HAMILTONIAN, CAV, &["dpk01_mrad", "dpk12_mrad", "dpk23_mrad", "sigma01_mrad", "sigma12_mrad", "sigma23_mrad"]],
        optional: &[OSC_OPT, &["T1_a_s", "n_th_a", "n_mc", "probe_offset_Hz"]],
        run: run::spectroscopy_invert,
    },
    Experiment {
        name: "tz-scan",
        figure: "Fig. 5c",
        summary: "bit-flip time with and without engineered dissipation across eps2",
        required: &[OSC, CAV, &["g_diss_Hz"]],
        optional: &[OSC_OPT, &["cavity_dim", "dissipation_detuning_Hz"], EPS2_GRID],
        run: run::tz_scan,
    },
    Experiment {
        name: "eps2-threshold",
        figure: "Fig. 4e",
        summary: "relative Z change versus dissipation detuning and eps2; threshold and isoline",
        required: &[&["K_over_2pi_Hz", "delta_over_K", "g3_over_2pi_Hz", "T1_a_s", "n_th_a"], CAV, &["g_diss_Hz"]],
        optional: &[
            &["eps2_over_K", "xi_zro", "omit_stark", "fock_dim", "cavity_dim", "model", "duration_s"],
            &["detuning_span_Hz", "detuning_points", "isoline_Hz"],
            EPS2_GRID,
        ],
        run: run::eps2_threshold,
    },
    Experiment {
        name: "init-ramp",
        figure: "Fig. S3",
        summary: "lossless ramp from vacuum, with and without the detuning ramp",
        required: &[HAMILTONIAN],
        optional: &[OSC_OPT, &["T1_a_s", "n_th_a", "eps2_ramp_s", "eps2_sigma_s", "delta_ramp_s", "delta_sigma_s"]],
        run: run::init_ramp,
    },
    Experiment {
        name: "gate-fidelity",
        figure: "gate estimates",
        summary: "Kerr-gate Uhlmann fidelity and Z-gate error",
        required: &[HAMILTONIAN, &["kappa1_eff_Hz", "kappaphi_eff_Hz"]],
        optional: &[OSC_OPT, &["T1_a_s", "n_th_a", "tau_min_s", "tau_max_s", "tau_points", "z_gamma_inv_s", "z_tau_s"]],
        run: run::gate_fidelity,
    },
    Experiment {
        name: "zro-fidelity",
        figure: "Fig. S4e",
        summary: "readout fidelity and QND-ness from paired synthetic shots",
        required: &[],
        optional: &[&["zro_shots", "zro_separation", "zro_sigma", "zro_flip", "zro_threshold"]],
        run: run::zro_fidelity,
    },
    Experiment {
        name: "robustness",
        figure: "Tables S1-S2",
        summary: "heating-free fits of heating-contaminated signals and both p1 estimators",
        required: &[RATES],
        optional: &[CONTRASTS, PULSE, &["heating_fraction", "ramsey_detuning_Hz", "p2", "p2_sigma"]],
        run: run::robustness,
    },
];

pub fn find_experiment(name: &str) -> Option<&'static Experiment> {
    REGISTRY.iter().find(|e| e.name == name)
}

pub fn listing() -> String {
    let heads: Vec<String> = REGISTRY.iter().map(|e| format!("{} → {}", e.name, e.figure)).collect();
    let w = heads.iter().map(|h| h.chars().count()).max().unwrap_or(0);
    let mut s = String::new();
    for (h, e) in heads.iter().zip(REGISTRY) {
        s.push_str(&format!("{:<w$}  {}\n", h, e.summary, w = w));
    }
    s
}
