use kerrcat::composite::{build_coupled_model, CavityParams, DissipationDrive};
use kerrcat::dynamics::*;
use kerrcat::hilbert::build_fock_operators;
use kerrcat::linalg::{self, c, re, CMat, C64};
use kerrcat::spectrum::{build_spectrum, OscillatorParams, TWO_PI};
use kerrcat::KerrcatError;

const KAPPA: f64 = 1.0e5;

fn ops(n: usize) -> (CMat, CMat, CMat) {
    let o = build_fock_operators(n).unwrap();
    (o.annihilation, o.creation, o.number)
}

fn damping(n: usize, down: f64, up: f64, h: CMat) -> LindbladModel {
    let (a, ad, _) = ops(n);
    let mut m = LindbladModel::new(h, vec![Jump::new(down, a)], BasisTag::Fock).unwrap();
    if up > 0.0 {
        m.push_jump(up, ad);
    }
    m
}

fn basis_state(n: usize, k: usize) -> DensityState {
    let mut psi = vec![C64::new(0.0, 0.0); n];
    psi[k] = re(1.0);
    DensityState::pure(&psi, BasisTag::Fock, vec![n]).unwrap()
}

fn sorted(mut v: Vec<C64>) -> Vec<C64> {
    v.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
    v
}

fn lcg(seed: u64) -> impl FnMut() -> f64 {
    let mut x = seed;
    move || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }
}

fn random_model(n: usize, seed: u64) -> LindbladModel {
    let mut r = lcg(seed);
    let mut g = linalg::zeros(n, n);
    let mut j1 = linalg::zeros(n, n);
    let mut j2 = linalg::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            g[(i, k)] = c(r(), r());
            j1[(i, k)] = c(r(), r());
            j2[(i, k)] = c(r(), r());
        }
    }
    let h = linalg::hermitize(&g);
    LindbladModel::new(h, vec![Jump::new(0.7, j1), Jump::new(0.3, j2)], BasisTag::Fock).unwrap()
}

#[test]
fn amplitude_damping_liouvillian_spectrum() {
    let l = build_liouvillian(&damping(2, KAPPA, 0.0, linalg::zeros(2, 2))).unwrap();
    let got = sorted(l.eigenvalues().unwrap());
    let want = [-KAPPA, -KAPPA / 2.0, -KAPPA / 2.0, 0.0];
    for (g, w) in got.iter().zip(want) {
        assert!((g - re(w)).norm() < 1e-9 * KAPPA, "{g} vs {w}");
    }
}

#[test]
fn unitary_generator_has_imaginary_spectrum() {
    let w = 3.0;
    let (_, _, n) = ops(3);
    let m = LindbladModel::new(linalg::scale_real(&n, w), vec![], BasisTag::Fock).unwrap();
    let ev = build_liouvillian(&m).unwrap().eigenvalues().unwrap();
    for z in &ev {
        assert!(z.re.abs() < 1e-12);
        let k = z.im / w;
        assert!((k - k.round()).abs() < 1e-12 && k.abs() <= 2.0 + 1e-12);
    }
}

#[test]
fn liouvillian_preserves_trace() {
    for seed in 0..3 {
        let l = build_liouvillian(&random_model(4, seed)).unwrap();
        let vi = linalg::vectorize(&linalg::identity(4));
        for col in 0..16 {
            let s: C64 = (0..16).map(|r| vi[r].conj() * l[(r, col)]).sum();
            assert!(s.norm() < 1e-12, "seed {seed} col {col}: {s}");
        }
    }
}

#[test]
fn dimension_mismatch_is_invalid_model() {
    let (a, _, _) = ops(3);
    let r = LindbladModel::new(linalg::zeros(2, 2), vec![Jump::new(1.0, a)], BasisTag::Fock).and_then(|m| build_liouvillian(&m));
    assert!(matches!(r, Err(KerrcatError::InvalidModel(_))));
}

#[test]
fn excited_state_decays_exponentially() {
    let m = damping(2, KAPPA, 0.0, linalg::zeros(2, 2));
    let times: Vec<f64> = (0..50).map(|k| k as f64 * 1e-6).collect();
    let out = evolve(&m, &basis_state(2, 1), &times).unwrap();
    for (t, s) in times.iter().zip(&out) {
        assert!((s.populations()[1] - (-KAPPA * t).exp()).abs() < 1e-8);
    }
}

#[test]
fn thermal_oscillator_relaxes_to_bath_occupation() {
    let nb = 0.025;
    let m = damping(10, KAPPA * (1.0 + nb), KAPPA * nb, linalg::zeros(10, 10));
    let (_, _, n) = ops(10);
    let out = evolve(&m, &basis_state(10, 0), &[20.0 / KAPPA]).unwrap();
    let (mean, _) = expectation(&out[0], &n).unwrap();
    assert!((mean - nb).abs() < 1e-6, "{mean}");
}

#[test]
fn propagation_stays_hermitian_and_positive() {
    let m = random_model(5, 11);
    let times: Vec<f64> = (0..20).map(|k| 0.25 * k as f64).collect();
    let rho0 = DensityState::new(
        linalg::scale_real(&(&linalg::identity(5) + &linalg::projector(&[re(1.0), c(0.0, 1.0), re(0.0), re(0.0), re(0.0)])), 1.0 / 7.0),
        BasisTag::Fock,
        vec![5],
    )
    .unwrap();
    for s in evolve(&m, &rho0, &times).unwrap() {
        assert!(s.hermiticity_error() < 1e-9);
        assert!(s.min_eigenvalue().unwrap() > -1e-7);
        assert!((s.trace() - re(1.0)).norm() < 1e-8);
    }
}

#[test]
fn constant_hamiltonian_matches_spectral_evolve() {
    let w = TWO_PI * 1e6;
    let (_, _, n) = ops(2);
    let h = linalg::scale_real(&n, w);
    let m = damping(2, KAPPA, 0.2 * KAPPA, h.clone());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rho0 = DensityState::pure(&[re(s), re(s)], BasisTag::Fock, vec![2]).unwrap();
    let t = 3e-6;
    let spectral = evolve(&m, &rho0, &[t]).unwrap().remove(0);
    let stepped = evolve_time_dependent(&|_t: f64| h.clone(), &m.jumps, &rho0, t, 1.0 / (50.0 * w)).unwrap();
    assert!(linalg::max_abs_diff(spectral.matrix(), stepped.matrix()) < 1e-7);

    // no jumps, pure state: the state-vector path must agree too
    let closed = LindbladModel::new(h.clone(), vec![], BasisTag::Fock).unwrap();
    let a = evolve(&closed, &rho0, &[t]).unwrap().remove(0);
    let b = evolve_time_dependent(&|_t: f64| h.clone(), &[], &rho0, t, 1.0 / (50.0 * w)).unwrap();
    assert!(linalg::max_abs_diff(a.matrix(), b.matrix()) < 1e-7);
}

#[test]
fn resonant_drive_gives_calibrated_rabi_oscillation() {
    let (w, om) = (TWO_PI * 10e6, TWO_PI * 1e6);
    let (a, ad, n) = ops(2);
    let h = move |t: f64| {
        let e = C64::from_polar(1.0, w * t);
        &(&linalg::scale_real(&n, w) + &linalg::scale(&a, e * om)) + &linalg::scale(&ad, e.conj() * om)
    };
    let dt = 1.0 / (50.0 * (w + om));
    // rotating-wave is exact here: p1(t) = sin²(Ω t)
    for frac in [0.1, 0.25, 0.4, 0.5] {
        let t = frac * std::f64::consts::PI / om;
        let p1 = evolve_time_dependent(&h, &[], &basis_state(2, 0), t, dt).unwrap().populations()[1];
        assert!((p1 - (om * t).sin().powi(2)).abs() < 1e-3, "t = {t}: {p1}");
    }
}

#[test]
fn gaussian_pi_pulse_inverts() {
    let (a, ad, _) = ops(2);
    let sx = &a + &ad;
    let sigma = 20e-9;
    let len = 6.0 * sigma;
    let amp = std::f64::consts::PI / (sigma * (TWO_PI).sqrt());
    let h = move |t: f64| linalg::scale_real(&sx, 0.5 * amp * (-(t - len / 2.0).powi(2) / (2.0 * sigma * sigma)).exp());
    let out = evolve_time_dependent(&h, &[], &basis_state(2, 0), len, 1.0 / (50.0 * amp)).unwrap();
    assert!(out.populations()[0] < 1e-3, "{}", out.populations()[0]);
}

#[test]
fn oversized_step_is_reported() {
    let (_, _, n) = ops(2);
    let h = linalg::scale_real(&n, 1.0);
    let m = damping(2, 5.0, 0.0, h.clone());
    let r = evolve_time_dependent(&|_t: f64| h.clone(), &m.jumps, &basis_state(2, 1), 10.0, 5.0);
    assert!(matches!(r, Err(KerrcatError::StepSizeTooLarge { .. })));
}

#[test]
fn steady_states_of_simple_baths() {
    let vac = steady_state(&damping(6, KAPPA, 0.0, linalg::zeros(6, 6))).unwrap();
    assert!((vac.populations()[0] - 1.0).abs() < 1e-10);

    let nb = 0.025;
    let th = steady_state(&damping(10, KAPPA * (1.0 + nb), KAPPA * nb, linalg::zeros(10, 10))).unwrap();
    let p = th.populations();
    assert!((p[1] / p[0] - nb / (1.0 + nb)).abs() < 1e-10);
    let (_, _, n) = ops(10);
    assert!((expectation(&th, &n).unwrap().0 - nb).abs() < 1e-9);
    assert!((expectation(&th, &linalg::identity(10)).unwrap().0 - 1.0).abs() < 1e-12);
}

#[test]
fn closed_system_has_no_unique_steady_state() {
    let m = LindbladModel::new(linalg::zeros(2, 2), vec![], BasisTag::Fock).unwrap();
    assert!(matches!(steady_state(&m), Err(KerrcatError::NonUniqueSteadyState(_))));
}

#[test]
fn decay_rates_of_two_level_channels() {
    let sz = linalg::diag_real(&[-1.0, 1.0]);
    let r = slowest_decay_rate(&damping(2, KAPPA, 0.0, linalg::zeros(2, 2)), &sz).unwrap();
    assert!((r / KAPPA - 1.0).abs() < 1e-9);
    let r = slowest_decay_rate(&damping(2, KAPPA, 0.3 * KAPPA, linalg::zeros(2, 2)), &sz).unwrap();
    assert!((r / (1.3 * KAPPA) - 1.0).abs() < 1e-9);
}

#[test]
fn spectral_rate_matches_time_domain_fit() {
    // working point with engineered dissipation on
    let p = OscillatorParams::working_point();
    let s = build_spectrum(&p, 45).unwrap();
    let cm = build_coupled_model(&p, &CavityParams::device(), &DissipationDrive::resonant(TWO_PI * 166e3), &s).unwrap();
    let z = cm.observable_z(&s).unwrap();
    let rate = slowest_decay_rate(&cm.model, &z).unwrap();

    let m0 = s.manifold(0).unwrap();
    let mut psi = vec![C64::new(0.0, 0.0); cm.osc_dim()];
    psi[m0.plus] = re(std::f64::consts::FRAC_1_SQRT_2);
    psi[m0.minus] = re(std::f64::consts::FRAC_1_SQRT_2);
    let rho0 = cm.with_cavity_vacuum(&linalg::projector(&psi)).unwrap();
    assert!((expectation(&rho0, &z).unwrap().0 - 1.0).abs() < 1e-12);

    let times: Vec<f64> = (1..=30).map(|k| k as f64 * 0.1 / rate).collect();
    let zs: Vec<f64> = evolve(&cm.model, &rho0, &times).unwrap().iter().map(|st| expectation(st, &z).unwrap().0).collect();
    let fit = kerrcat::fitting::fit_exp(&times, &zs).unwrap();
    let tau = fit.get("tau").unwrap();
    assert!((1.0 / tau / rate - 1.0).abs() < 0.05, "fit {} vs spectral {rate}", 1.0 / tau);
}

#[test]
fn expectation_shape_mismatch() {
    assert!(matches!(expectation(&basis_state(3, 0), &linalg::identity(2)), Err(KerrcatError::InvalidShape(_))));
}
