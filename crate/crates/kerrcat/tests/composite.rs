use kerrcat::composite::*;
use kerrcat::dynamics::steady_state;
use kerrcat::linalg;
use kerrcat::spectrum::*;

fn setup() -> (OscillatorParams, ManifoldSpectrum) {
    let p = OscillatorParams::working_point();
    let s = build_spectrum(&p, 45).unwrap();
    (p, s)
}

#[test]
fn kappa_diss_at_reference_couplings() {
    let (p, s) = setup();
    let cav = CavityParams::device();
    let k166 = extract_kappa_diss(&p, &cav, &DissipationDrive::resonant(TWO_PI * 166e3), &s).unwrap() / TWO_PI;
    let k50 = extract_kappa_diss(&p, &cav, &DissipationDrive::resonant(TWO_PI * 50e3), &s).unwrap() / TWO_PI;
    assert!((k166 / 118.7e3 - 1.0).abs() < 0.02, "{k166}");
    assert!((k50 / 14.03e3 - 1.0).abs() < 0.02, "{k50}");
}

#[test]
fn weak_coupling_matches_golden_rule() {
    let (p, s) = setup();
    let cav = CavityParams::device();
    let g = TWO_PI * 20e3;
    let k = extract_kappa_diss(&p, &cav, &DissipationDrive::resonant(g), &s).unwrap();
    let est = 4.0 * g * g / cav.kappa_b();
    // Matrix element |⟨ψ₀|a|ψ₁⟩| < 1 keeps the full-model rate a little below 4g²/κ_b.
    assert!(k < est && k > 0.9 * est, "{} vs {}", k, est);
}

#[test]
fn zero_coupling_is_rejected() {
    let (p, s) = setup();
    assert!(extract_kappa_diss(&p, &CavityParams::device(), &DissipationDrive::resonant(0.0), &s).is_err());
}

#[test]
fn coupled_model_structure() {
    let (p, s) = setup();
    let cav = CavityParams::device().with_thermal(0.01);
    assert_eq!(cav.cavity_dim, 3);
    let cm = build_coupled_model(&p, &cav, &DissipationDrive::resonant(TWO_PI * 100e3), &s).unwrap();
    assert_eq!(cm.dim(), s.default_truncation() * 3);
    assert!(linalg::is_hermitian(&cm.model.hamiltonian, 1e-12));
    assert!((cm.cavity_detuning - s.transition(0, 1).unwrap()).abs() < 1e-9);
    let z = cm.observable_z(&s).unwrap();
    assert!(linalg::is_hermitian(&z, 1e-14));
}

#[test]
fn effective_rates_follow_lorentzian() {
    let (_, s) = setup();
    let cav = CavityParams::device();
    let g = TWO_PI * 166e3;
    let proj = EigenProjection::new(&s, 8).unwrap();
    let chans = effective_channels(&cav, &DissipationDrive::resonant(g), &s, &proj).unwrap();
    let res = chans.iter().find(|c| c.from == 1 && c.to == 0).unwrap();
    assert!((res.cooling_rate / (4.0 * g * g / cav.kappa_b()) - 1.0).abs() < 1e-12);
    let intra = chans.iter().find(|c| c.from == 0 && c.to == 0).unwrap();
    let ratio = intra.cooling_rate / res.cooling_rate;
    let w01 = s.transition(0, 1).unwrap();
    let kb = cav.kappa_b();
    assert!((ratio - (kb * kb / 4.0) / (kb * kb / 4.0 + w01 * w01)).abs() < 1e-12);
    assert!(ratio < 1e-3);
    assert!(chans.iter().all(|c| c.heating_rate == 0.0));
}

#[test]
fn effective_model_tracks_full_model_steady_state() {
    let (p, _) = setup();
    let p = p.with_kappa_a(1.0 / 15e-6).with_thermal(0.025);
    let s2 = build_spectrum(&p, 45).unwrap();
    let cav = CavityParams::device();
    let drive = DissipationDrive::resonant(TWO_PI * 60e3);
    let cm = build_coupled_model(&p, &cav, &drive, &s2).unwrap();
    let full = steady_state(&cm.model).unwrap();
    let p1_full = linalg::trace(&(&cm.manifold_projector(1) * full.matrix())).re;
    let (em, proj) = effective_model(&p, &cav, &drive, &s2, cm.osc_dim()).unwrap();
    let eff = steady_state(&em).unwrap();
    let p1_eff = linalg::trace(&(&proj.manifold_projector(1) * eff.matrix())).re;
    assert!((p1_eff / p1_full - 1.0).abs() < 0.05, "{p1_eff} vs {p1_full}");
}

#[test]
fn two_mode_decay_matches_ode() {
    let q = TwoModeDecayParams { g: 3.0, kappa_a: 0.4, kappa_b: 5.0 };
    // Independent RK4 on ȧ = −κ_a/2 a − i g b, ḃ = −κ_b/2 b − i g a.
    let (mut a, mut b) = (linalg::c(1.0, 0.0), linalg::c(0.0, 0.0));
    let i = linalg::c(0.0, 1.0);
    let f = |a: linalg::C64, b: linalg::C64| (a * (-q.kappa_a / 2.0) - i * q.g * b, b * (-q.kappa_b / 2.0) - i * q.g * a);
    let dt = 1e-4;
    for step in 1..=20000 {
        let (k1a, k1b) = f(a, b);
        let (k2a, k2b) = f(a + k1a * (dt / 2.0), b + k1b * (dt / 2.0));
        let (k3a, k3b) = f(a + k2a * (dt / 2.0), b + k2b * (dt / 2.0));
        let (k4a, k4b) = f(a + k3a * dt, b + k3b * dt);
        a += (k1a + k2a * 2.0 + k3a * 2.0 + k4a) * (dt / 6.0);
        b += (k1b + k2b * 2.0 + k3b * 2.0 + k4b) * (dt / 6.0);
        if step % 2500 == 0 {
            let (na, bb) = analytic_two_mode_decay(&q, step as f64 * dt);
            assert!((na - a.norm_sqr()).abs() < 1e-9);
            assert!((bb - b).norm() < 1e-9);
        }
    }
    // Critical damping branch, Λ = 0.
    let crit = TwoModeDecayParams { g: 1.0, kappa_a: 0.0, kappa_b: 4.0 };
    assert!(crit.lambda().norm() < 1e-12);
    assert!(analytic_two_mode_decay(&crit, 0.7).0.is_finite());
}

#[test]
fn gdiss_fit_recovers_coupling() {
    let (ka, kb) = (TWO_PI * 10e3, TWO_PI * 680e3);
    let mut traces = Vec::new();
    for g in [TWO_PI * 100e3, TWO_PI * 400e3] {
        let q = TwoModeDecayParams { g, kappa_a: ka, kappa_b: kb };
        let t: Vec<f64> = (0..80).map(|k| k as f64 * 50e-9).collect();
        let y: Vec<f64> = t.iter().map(|&x| 3.0 * analytic_two_mode_decay(&q, x).0 + 0.1).collect();
        traces.push((t, y));
    }
    let fits = fit_gdiss_from_decay(&traces, ka, kb).unwrap();
    for (f, g) in fits.iter().zip([100e3, 400e3]) {
        assert!((f.get("g").unwrap() / TWO_PI / g - 1.0).abs() < 1e-6);
    }
    let flat = vec![(vec![0.0; 10].iter().enumerate().map(|(i, _)| i as f64 * 1e-7).collect(), vec![0.2; 10])];
    assert!(fit_gdiss_from_decay(&flat, ka, kb).is_err());
}
