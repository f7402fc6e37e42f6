use kerrcat::composite::{CavityParams, DissipationDrive};
use kerrcat::fitting::GaussianInput;
use kerrcat::protocols::*;
use kerrcat::spectrum::*;

fn working() -> (OscillatorParams, ManifoldSpectrum) {
    let p = OscillatorParams::working_point();
    let s = build_spectrum(&p, 45).unwrap();
    (p, s)
}

fn contrasts() -> ReadoutContrasts {
    ReadoutContrasts::new(0.0, 1.0, 1.78, 2.3)
}

fn times(end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| end * k as f64 / (n - 1) as f64).collect()
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn closed_form_signals_match_lindblad() {
    let rates = DecoherenceRates::device();
    let ts = times(40e-6, 50);
    let dw = TWO_PI * 200e3;
    let exact = manifold_coherence_signals(&rates, &contrasts(), dw, &ts).unwrap();
    let num = simulate_coherence_experiments(&ManifoldModel::ideal(rates), &contrasts(), dw, &ts).unwrap();
    for (a, b) in [
        (&exact.t1_01, &num.t1_01),
        (&exact.tphi_01, &num.tphi_01),
        (&exact.t1_12, &num.t1_12),
        (&exact.tphi_12, &num.tphi_12),
    ] {
        assert!(max_dev(a, b) < 1e-8, "{}", max_dev(a, b));
    }
}

#[test]
fn closed_forms_at_equal_relaxation_rates() {
    let mut rates = DecoherenceRates::device();
    rates.k1_12 = rates.k1_01;
    let ts = times(100e-6, 50);
    let exact = manifold_coherence_signals(&rates, &contrasts(), 0.0, &ts).unwrap();
    let num = simulate_coherence_experiments(&ManifoldModel::ideal(rates), &contrasts(), 0.0, &ts).unwrap();
    assert!(max_dev(&exact.t1_12, &num.t1_12) < 1e-8);
    assert!(exact.t1_12.iter().all(|v| v.is_finite()));
}

#[test]
fn signal_boundary_values() {
    let c = contrasts();
    let s = manifold_coherence_signals(&DecoherenceRates::device(), &c, 0.0, &[0.0, 1.0]).unwrap();
    assert!((s.t1_01[0] - c.m1).abs() < 1e-14);
    assert!((s.t1_12[0] - c.m2).abs() < 1e-14);
    assert!((s.t1_01[1] - c.m0).abs() < 1e-9);
    assert!((s.t1_12[1] - c.m1).abs() < 1e-9);
}

#[test]
fn readout_contrasts_at_working_point() {
    let (_, s) = working();
    let rc = cavity_readout_model(&CavityParams::device(), &s, 0.0).unwrap();
    assert!((rc.m0.abs() - std::f64::consts::PI).abs() < 1e-9);
    let step = rc.m1 - rc.m0;
    assert!(step < -0.2 && step > -1.0, "{step}");
    // Far off resonance the reflection approaches unity.
    let far = reflection(TWO_PI * 524e3, TWO_PI * 681e3, 200.0 * TWO_PI * 681e3);
    assert!(far.arg().abs() < 0.01);
}

#[test]
fn spectroscopy_round_trip_is_exact() {
    let (_, s) = working();
    let rc = cavity_readout_model(&CavityParams::device(), &s, 0.0).unwrap();
    let truth = [0.91, 0.077, 0.013];
    let peaks = spectroscopy_forward(truth, &rc, 0.83);
    let back = spectroscopy_solve(peaks, &rc).unwrap();
    for (a, b) in back.iter().zip(truth) {
        assert!((a - b).abs() < 1e-10);
    }
    let zero = spectroscopy_solve([peaks[0], 0.0, 0.0], &rc).unwrap();
    assert_eq!(zero, [1.0, 0.0, 0.0]);
}

#[test]
fn spectroscopy_with_measured_peaks() {
    let (_, s) = working();
    let rc = cavity_readout_model(&CavityParams::device(), &s, 0.0).unwrap();
    let peaks = [GaussianInput::new(-453.7e-3, 14e-3), GaussianInput::new(-28.0e-3, 13.7e-3), GaussianInput::new(-4.1e-3, 1.6e-3)];
    let est = spectroscopy_inversion(&peaks, &rc, 2000, 11).unwrap();
    assert!((est.p0 - 0.9098).abs() < 0.015, "{est:?}");
    assert!((est.p1 - 0.0769).abs() < 0.015);
    assert!((est.p2 - 0.0133).abs() < 0.015);
    assert!(est.sigma1 > 0.015 && est.sigma1 < 0.045, "{}", est.sigma1);
    let again = spectroscopy_inversion(&peaks, &rc, 2000, 11).unwrap();
    assert_eq!(est, again);
}

#[test]
fn quantum_heating_populations() {
    let (p, s) = working();
    let [_, p1, p2] = steady_leakage(&p, &s).unwrap();
    assert!((p1 - 0.070).abs() < 0.003, "{p1}");
    assert!((p2 - 0.006).abs() < 0.003, "{p2}");
    let hot = p.with_thermal(0.025);
    let [_, q1, q2] = steady_leakage(&hot, &s).unwrap();
    assert!((q1 - 0.091).abs() < 0.003, "{q1}");
    assert!((q2 - 0.011).abs() < 0.003, "{q2}");
}

#[test]
fn dephasing_mimics_thermal_excitation() {
    let (p, s) = working();
    let base = steady_leakage(&p, &s).unwrap();
    let none = dephasing_equivalent_heating(&p, &s, 0.0).unwrap();
    assert!((base[1] - none[1]).abs() < 1e-12);
    let mut last = none[1];
    for hz in [10.0, 21.0, 50.0] {
        let q = dephasing_equivalent_heating(&p, &s, TWO_PI * hz).unwrap();
        assert!(q[1] > last);
        last = q[1];
        if hz == 21.0 {
            assert!((q[1] - 0.091).abs() < 0.005, "{}", q[1]);
        }
    }
}

#[test]
fn dissipation_lowers_leakage() {
    let (p, s) = working();
    let osc = p.with_thermal(0.025);
    let cav = CavityParams::device().with_thermal(0.025);
    let drives = [DissipationDrive::resonant(0.0), DissipationDrive::resonant(TWO_PI * 100e3)];
    let pts = steady_leakage_vs_dissipation(&osc, &cav, &drives, &s, DEFAULT_TAU_DELAY).unwrap();
    assert!((pts[0].p1 - 0.091).abs() < 0.003, "{:?}", pts[0]);
    assert!((pts[1].p1 - 0.03).abs() < 0.01, "{:?}", pts[1]);
}

#[test]
fn robustness_study_reproduces_table_scale() {
    let rates = DecoherenceRates::device().with_heating_fraction(0.1);
    let rep = excitation_robustness_study(&rates, &ReadoutContrasts::new(0.0, 1.0, 1.78, 2.3), &RobustnessSettings::default()).unwrap();
    let expect = [-0.0486, 0.0818, 0.1495, -0.0378];
    for (e, x) in rep.relative_errors.iter().zip(expect) {
        assert!((e - x).abs() < 0.01, "{:?}", rep.relative_errors);
        assert!(e.abs() <= 0.20);
    }
    assert!((rep.true_populations[1] - 0.0901).abs() < 1e-3);
    assert!((rep.by_ratio.p1 - 0.0980).abs() < 0.003, "{:?}", rep.by_ratio);
    assert!((rep.by_model.p1 - 0.0934).abs() < 0.003, "{:?}", rep.by_model);
    let truth = rep.true_populations[1];
    assert!((rep.by_ratio.p1 - truth).abs() > (rep.by_model.p1 - truth).abs());
}

#[test]
fn ratio_estimator_inverts_ideal_traces() {
    let model = ManifoldModel::ideal(DecoherenceRates::new(0.0, 0.0, 0.0, 0.0));
    let shape = PulseShape::default();
    let amps: Vec<f64> = (0..41).map(|k| k as f64 * 0.05).collect();
    let resp = rabi_response(&model, &shape, &amps).unwrap();
    let tr = resp.traces([0.9, 0.08, 0.02], [0.0, 1.0, 1.78]);
    let est = fit_leakage_population(&tr, &model, &shape, GaussianInput::new(0.02, 0.0), LeakageFitMode::AmplitudeRatio, 100, 1).unwrap();
    assert!((est.p1 - 0.08).abs() < 1e-4, "{est:?}");
}

#[test]
fn initialization_needs_detuning_ramp() {
    let (p, _) = working();
    let with = initialization_ramp(&p, &default_eps2_ramp(&p), &default_delta_ramp(&p), true, 45).unwrap();
    let without = initialization_ramp(&p, &default_eps2_ramp(&p), &default_delta_ramp(&p), false, 45).unwrap();
    assert!(with.fidelity >= 0.90, "{}", with.fidelity);
    assert!(without.fidelity <= 0.01, "{}", without.fidelity);
}

#[test]
fn ramp_profile_endpoints() {
    let r = RampProfile::gaussian_rise(1e-6, 200e-9, 5.0);
    assert_eq!(r.value(0.0), 0.0);
    assert!((r.value(1e-6) - 5.0).abs() < 1e-12);
    assert!(r.value(0.5e-6) > 0.0 && r.value(0.5e-6) < 5.0);
    let f = RampProfile { kind: RampKind::FlatTop, duration: 2e-6, sigma: 8e-9, start_value: 0.0, end_value: 1.0 };
    assert_eq!(f.value(1e-6), 1.0);
    assert!(f.value(2e-6 - 1e-12).abs() < 1e-3);
    assert!(RampProfile::gaussian_rise(1e-6, 0.0, 1.0).validate().is_err());
}

#[test]
fn kerr_gate_fidelity_range() {
    let s = build_spectrum(&OscillatorParams::working_point(), 30).unwrap();
    let k = OscillatorParams::working_point().k;
    assert!((kerr_gate_fidelity(k, 0.0, 0.0, 140e-9, &s).unwrap() - 1.0).abs() < 1e-9);
    let f140 = kerr_gate_fidelity(k, TWO_PI * 4.2e3, TWO_PI * 21.2e3, 140e-9, &s).unwrap();
    let f144 = kerr_gate_fidelity(k, TWO_PI * 4.2e3, TWO_PI * 21.2e3, 144e-9, &s).unwrap();
    assert!((f140 - 0.9167).abs() < 1e-3, "{f140}");
    assert!((f144 - 0.9144).abs() < 1e-3, "{f144}");
    let mut last = 1.0;
    for k1 in [1e3, 5e3, 20e3] {
        let f = kerr_gate_fidelity(k, TWO_PI * k1, TWO_PI * 21.2e3, 140e-9, &s).unwrap();
        assert!(f < last);
        last = f;
    }
}

#[test]
fn kerr_bands_match_general_propagation() {
    use kerrcat::dynamics::{evolve, BasisTag, DensityState, Jump, LindbladModel};
    use kerrcat::hilbert::build_fock_operators;
    use kerrcat::linalg;
    let n = 8;
    let ops = build_fock_operators(n).unwrap();
    let a = ops.annihilation.clone();
    let ad = linalg::dagger(&a);
    let k = TWO_PI * 1.74e6;
    let h = linalg::scale_real(&(&(&ad * &ad) * &(&a * &a)), -k);
    let psi = kerrcat::hilbert::coherent_state(n, linalg::c(0.8, 0.3));
    let rho = linalg::projector(&psi);
    let (k1, kp, tau) = (TWO_PI * 40e3, TWO_PI * 90e3, 300e-9);
    let model = LindbladModel::new(h, vec![Jump::new(k1, a.clone()), Jump::new(kp, &ad * &a)], BasisTag::Fock).unwrap();
    let r0 = DensityState::new(rho.clone(), BasisTag::Fock, vec![n]).unwrap();
    let general = evolve(&model, &r0, &[tau]).unwrap();
    let banded = kerr_evolve(&rho, k, k1, kp, tau);
    assert!(linalg::max_abs_diff(general[0].matrix(), &banded) < 1e-9);
}

#[test]
fn z_gate_error_formula() {
    assert_eq!(z_gate_error(1.0 / 2.91e-6, 0.0), 0.0);
    let e = z_gate_error(1.0 / 2.91e-6, 100e-9);
    assert!((e - 0.0167).abs() < 0.0005, "{e}");
    assert!((z_gate_error(1.0, 1e6) - 0.5).abs() < 1e-12);
}

#[test]
fn zro_counting() {
    let (a, b) = synthetic_zro_shots(4000, 100.0, 1.0, 0.0, 3).unwrap();
    let m = zro_fidelity_qnd(&a, &b, 0.0).unwrap();
    assert_eq!((m.fidelity, m.qnd), (1.0, 1.0));

    // 3 of 1000 minus shots read plus, 29 of 10000 plus shots read minus.
    let mut first = vec![-1.0; 1000];
    let mut second = vec![-1.0; 1000];
    second[..3].iter_mut().for_each(|x| *x = 1.0);
    first.extend(vec![1.0; 10000]);
    second.extend((0..10000).map(|i| if i < 29 { -1.0 } else { 1.0 }));
    let m = zro_fidelity_qnd(&first, &second, 0.0).unwrap();
    assert!((m.fidelity - 0.9941).abs() < 1e-12);

    let (a, b) = synthetic_zro_shots(20000, 100.0, 1.0, 0.05, 5).unwrap();
    let m = zro_fidelity_qnd(&a, &b, 0.0).unwrap();
    let sigma = (2.0 * 0.05 * 0.95 / 10000.0f64).sqrt();
    assert!((m.fidelity - 0.90).abs() < 3.0 * sigma, "{}", m.fidelity);

    assert!(zro_fidelity_qnd(&[1.0, 2.0], &[1.0, 1.0], 0.0).is_err());
}
