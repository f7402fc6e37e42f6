use kerrcat::hilbert::{coherent_state, fock_operators, FockSpace};
use kerrcat::linalg::{self, c};
use kerrcat::spectrum::*;

fn wp() -> OscillatorParams {
    OscillatorParams::working_point()
}

#[test]
fn stark_shift_magnitude_at_working_point() {
    let p = wp();
    let mhz = p.stark_shift() / TWO_PI / 1e6;
    // 4K|ε₂/3g₃|² with ε₂ = 2.4K evaluated by hand.
    let k: f64 = 1.74;
    let hand = 4.0 * k * (2.4 * k / (3.0 * 6.5)).powi(2);
    assert!((mhz - hand).abs() < 1e-12);
    assert!((mhz - 0.319).abs() < 0.002, "{mhz}");
}

#[test]
fn hamiltonian_is_number_diagonal_without_drive() {
    let p = OscillatorParams { eps2: 0.0, delta: 0.0, ..wp() };
    let space = FockSpace::new(10).unwrap();
    let h = build_kcq_hamiltonian(&p, space).unwrap();
    for m in 0..10 {
        for n in 0..10 {
            let want = if m == n { -p.k * (m as f64) * (m as f64 - 1.0) } else { 0.0 };
            assert!((h[(m, n)] - c(want, 0.0)).norm() < 1e-6);
        }
    }
}

#[test]
fn hamiltonian_commutes_with_parity() {
    let space = FockSpace::new(45).unwrap();
    let h = build_kcq_hamiltonian(&wp(), space).unwrap();
    let p = fock_operators(space).parity;
    assert!(linalg::max_abs(&linalg::commutator(&h, &p)) < 1e-10 * linalg::max_abs(&h));
    assert!(linalg::is_hermitian(&h, 1e-12));
}

#[test]
fn metapotential_stationary_values() {
    let p = wp().without_stark();
    let m = metapotential_geometry(&p);
    assert!((m.well_amplitude.powi(2) - 6.4).abs() < 1e-12);
    assert!((m.saddle_energy / p.k - 2.56).abs() < 1e-12);
    // Independent grid search over |β| ≤ 5.
    let e = |x: f64, y: f64| {
        let r2 = x * x + y * y;
        (p.delta * r2 - p.k * r2 * r2 + p.eps2 * 2.0 * (x * x - y * y)) / p.k
    };
    let mut best_well: f64 = f64::MIN;
    let mut best_saddle: f64 = f64::MIN;
    for i in 0..=2000 {
        let t = -5.0 + 10.0 * i as f64 / 2000.0;
        best_well = best_well.max(e(t, 0.0));
        best_saddle = best_saddle.max(e(0.0, t));
    }
    assert!((best_well - m.well_energy / p.k).abs() < 1e-3);
    assert!((best_saddle - 2.56).abs() < 1e-3);

    let z = metapotential_geometry(&OscillatorParams { eps2: 0.0, delta: 0.0, ..wp() });
    assert_eq!(z.well_amplitude, 0.0);
    assert_eq!(z.saddle_energy, 0.0);
    let edge = metapotential_geometry(&OscillatorParams { delta: 4.8 * wp().k, ..wp().without_stark() });
    assert_eq!(edge.saddle_energy, 0.0);
    assert_eq!(edge.saddle_location.im, 0.0);
}

#[test]
fn transition_frequencies_at_working_point() {
    let s = build_spectrum(&wp(), 45).unwrap();
    let w01 = s.transition(0, 1).unwrap() / TWO_PI / 1e6;
    let w12 = s.transition(1, 2).unwrap() / TWO_PI / 1e6;
    assert!((w01 / -25.83 - 1.0).abs() < 0.10, "w01 = {w01}");
    assert!((w12 / -21.65 - 1.0).abs() < 0.10, "w12 = {w12}");
    assert_eq!(s.confined_count, 8);
    for m in &s.manifolds {
        assert!(m.splitting >= 0.0);
    }
    for p in &s.parities {
        assert!(p.abs() > 0.999);
    }
}

#[test]
fn degeneracy_at_even_multiples_of_k() {
    for d in [2.0, 4.0, 6.0, 8.0] {
        for e in [1.5, 2.4] {
            let p = wp().without_stark().with_delta_over_k(d).with_eps2_over_k(e);
            let s = build_spectrum(&p, 45).unwrap();
            assert!(s.manifolds[0].mean_energy > s.metapotential.saddle_energy);
            assert!(s.splitting(0).unwrap() < 1e-6 * p.k, "delta={d} eps2={e}: {}", s.splitting(0).unwrap() / p.k);
        }
    }
}

#[test]
fn undriven_manifolds_are_fock_pairs() {
    let p = OscillatorParams { eps2: 0.0, delta: 0.0, ..wp() };
    let s = build_spectrum(&p, 16).unwrap();
    let v0 = s.plus(0).unwrap();
    let v1 = s.minus(0).unwrap();
    assert!((v0[0].norm() - 1.0).abs() < 1e-12 && (v1[1].norm() - 1.0).abs() < 1e-12);
    assert!((s.splitting(1).unwrap() - 4.0 * p.k).abs() < 1e-9 * p.k);
}

#[test]
fn kcq_basis_properties() {
    let s = build_spectrum(&wp(), 45).unwrap();
    let b = kcq_basis_states(&s).unwrap();
    assert!(linalg::inner(&b.plus_z, &b.minus_z).norm() < 1e-12);
    for v in [&b.plus_z, &b.minus_z, &b.plus_x, &b.plus_y] {
        assert!((linalg::norm(v) - 1.0).abs() < 1e-12);
    }
    let n = fock_operators(FockSpace::new(45).unwrap()).number;
    let nbar = linalg::sandwich(&b.plus_z, &n).re;
    let a2 = metapotential_geometry(&wp()).well_amplitude.powi(2);
    assert!((nbar / a2 - 1.0).abs() < 0.05, "nbar={nbar} alpha^2={a2}");

    // Δ = 0: |+Z⟩ is close to a coherent state of amplitude ±√(ε₂/K).
    let p = wp().with_delta_over_k(0.0);
    let s = build_spectrum(&p, 45).unwrap();
    let b = kcq_basis_states(&s).unwrap();
    let alpha = (p.eps2 / p.k).sqrt();
    let best = [alpha, -alpha]
        .iter()
        .map(|&a| linalg::inner(&coherent_state(45, c(a, 0.0)), &b.plus_z).norm_sqr())
        .fold(0.0, f64::max);
    assert!(best > 0.99, "overlap {best}");
}

#[test]
fn mean_photon_properties() {
    let mut last = -1.0;
    for i in 0..=12 {
        let e = 0.25 * i as f64;
        let s = build_spectrum(&wp().with_eps2_over_k(e), 45).unwrap();
        let n0 = s.mean_photon(0).unwrap();
        assert!(n0 > last, "eps2={e}");
        last = n0;
        // Localization needs a drive; at eps2 = 0 the pairs are degenerate Fock states.
        if e > 0.0 && s.splitting(1).unwrap() < 1e-2 * wp().k {
            assert!(s.mean_photon(1).unwrap() < n0, "eps2={e}: {} vs {n0}", s.mean_photon(1).unwrap());
        }
    }
}

#[test]
fn truncation_convergence_of_confined_splittings() {
    let a = build_spectrum(&wp(), 45).unwrap();
    let b = build_spectrum(&wp(), 90).unwrap();
    for i in 0..a.confined_count / 2 {
        let (x, y) = (a.manifolds[i].mean_energy, b.manifolds[i].mean_energy);
        assert!((x - y).abs() < 1e-6 * x.abs().max(wp().k));
        let (sx, sy) = (a.splitting(i).unwrap(), b.splitting(i).unwrap());
        assert!((sx - sy).abs() <= 1e-6 * sy.max(1e-3 * wp().k), "manifold {i}: {sx} vs {sy}");
    }
}

#[test]
fn isoline_round_trip() {
    let p = wp();
    let target = splitting_at(&p, 2.0 * p.k, 7.0 * p.k, 1, 45).unwrap();
    let e = splitting_isoline(target, 7.0 * p.k, &p, 1, (1.5 * p.k, 2.5 * p.k), 45).unwrap();
    assert!((e / (2.0 * p.k) - 1.0).abs() < 1e-3);
    assert!(matches!(
        splitting_isoline(target, 7.0 * p.k, &p, 1, (2.2 * p.k, 2.5 * p.k), 45),
        Err(kerrcat::KerrcatError::BracketFailure(_))
    ));
}

#[test]
fn spectrum_csv_header_and_rows() {
    let s = build_spectrum(&wp(), 45).unwrap();
    let csv = s.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "index,manifold,parity,energy_over_h_Hz,mean_photon");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[1], "0");
    assert!(csv.ends_with('\n'));
}
