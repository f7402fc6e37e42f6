use kerrcat::fitting::*;
use kerrcat::KerrcatError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn noisy(y: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    y.iter().map(|v| v + n.sample(&mut rng)).collect()
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn linear_model_recovers_exact_parameters() {
    let x = grid(-3.0, 5.0, 30);
    let y: Vec<f64> = x.iter().map(|v| -0.75 * v + 4.25).collect();
    let r = nonlinear_least_squares(|p| x.iter().map(|v| p[0] * v + p[1]).collect(), &y, None, &["m", "b"], &[1.0, 0.0], None, FitOptions::default())
        .unwrap();
    assert!(r.converged);
    assert!((r.params[0] + 0.75).abs() < 1e-10 && (r.params[1] - 4.25).abs() < 1e-10);
}

#[test]
fn exponential_rate_coverage() {
    // 1% noise on a unit-amplitude decay, 200 points, 1000 seeds
    let (tau, noise) = (2.0, 0.01);
    let x = grid(0.0, 8.0, 200);
    let clean = exp_model(&x, &[1.0, tau, 0.05]);
    let trials = 1000;
    let (mut in1, mut in3) = (0, 0);
    for seed in 0..trials {
        let r = fit_exp(&x, &noisy(&clean, noise, seed)).unwrap();
        let z = (r.get("tau").unwrap() - tau).abs() / r.err("tau").unwrap();
        in1 += (z <= 1.0) as usize;
        in3 += (z <= 3.0) as usize;
    }
    let (f1, f3) = (in1 as f64 / trials as f64, in3 as f64 / trials as f64);
    assert!((0.63..=0.73).contains(&f1), "1σ coverage {f1}");
    assert!(f3 >= 0.95, "3σ coverage {f3}");
}

#[test]
fn finite_difference_covariance_matches_analytic_jacobian() {
    let x = grid(0.0, 6.0, 60);
    let p = [0.8, 1.7, -0.1];
    let s = vec![0.02; x.len()];
    let y = noisy(&exp_model(&x, &p), 0.02, 3);
    let r = nonlinear_least_squares(|q| exp_model(&x, q), &y, Some(&s), &["a", "tau", "c"], &p, None, FitOptions::default()).unwrap();
    let (a, t) = (r.params[0], r.params[1]);
    // analytic ∂/∂(a, τ, c) of a·e^{−x/τ} + c, weighted by 1/σ
    let cols: Vec<Vec<f64>> = vec![
        x.iter().map(|v| (-v / t).exp() / 0.02).collect(),
        x.iter().map(|v| a * v / (t * t) * (-v / t).exp() / 0.02).collect(),
        x.iter().map(|_| 1.0 / 0.02).collect(),
    ];
    let jtj: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| cols[i].iter().zip(&cols[j]).map(|(u, w)| u * w).sum()).collect()).collect();
    for k in 0..3 {
        let unit: Vec<f64> = (0..3).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        let col = solve3(&jtj, &unit);
        let rel = (r.covariance[k][k] - col[k]).abs() / col[k];
        assert!(rel < 1e-5, "param {k}: {rel:e}");
    }
}

fn solve3(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let base = [[a[0][0], a[0][1], a[0][2]], [a[1][0], a[1][1], a[1][2]], [a[2][0], a[2][1], a[2][2]]];
    let d = det(&base);
    (0..3)
        .map(|k| {
            let mut m = base;
            for i in 0..3 {
                m[i][k] = b[i];
            }
            det(&m) / d
        })
        .collect()
}

#[test]
fn bound_with_outward_gradient_is_flagged() {
    let x = grid(0.0, 1.0, 10);
    let y: Vec<f64> = x.iter().map(|v| -v).collect();
    let r = nonlinear_least_squares(|p| x.iter().map(|v| p[0] * v).collect(), &y, None, &["m"], &[0.0], Some(&[(0.0, 10.0)]), FitOptions::default())
        .unwrap();
    assert!(r.converged);
    assert!(r.at_bound[0]);
    assert_eq!(r.params[0], 0.0);
}

#[test]
fn rabi_like_sinusoid_within_three_sigma() {
    let (gamma, omega) = (1.0 / 2.91e-6, std::f64::consts::TAU * 5.05e6);
    let x = grid(0.0, 3e-6, 300);
    let clean = decaying_sinusoid_model(&x, &[0.45, gamma, omega, 0.0, 0.5]);
    let r = canonical_fit(FitKind::DecayingSinusoid, &x, &noisy(&clean, 0.01, 17)).unwrap();
    assert!((r.get("gamma").unwrap() - gamma).abs() < 3.0 * r.err("gamma").unwrap());
    assert!((r.get("omega").unwrap() - omega).abs() < 3.0 * r.err("omega").unwrap());
}

#[test]
fn lorentzian_centre_is_exact_on_clean_peak() {
    let x = grid(-5.0, 5.0, 81);
    let y = lorentzian_model(&x, &[2.0, 0.3, 0.8, 0.1]);
    let r = canonical_fit(FitKind::Lorentzian, &x, &y).unwrap();
    assert!((r.get("x0").unwrap() - 0.3).abs() < 1e-9);
    // a dip fits as a negative amplitude
    let y = lorentzian_model(&x, &[-1.0, -1.2, 0.5, 3.0]);
    let r = canonical_fit(FitKind::Lorentzian, &x, &y).unwrap();
    assert!((r.get("x0").unwrap() + 1.2).abs() < 1e-9);
}

#[test]
fn double_exponential_with_equal_rates() {
    let k = 1.0 / 30e-6;
    let x = grid(0.0, 150e-6, 120);
    let truth = [k, k, 0.0, 1.0, 1.78];
    let y = double_exp_model(&x, &truth);
    assert!(y.iter().all(|v| v.is_finite()));
    let r = canonical_fit(FitKind::DoubleExp, &x, &y).unwrap();
    assert!(r.converged);
    for (got, want) in r.params.iter().zip(truth) {
        assert!((got - want).abs() < 1e-4 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn too_few_points_is_a_fit_error() {
    let x = grid(0.0, 1.0, 5);
    assert!(matches!(fit_exp(&x, &x), Err(KerrcatError::Fit(_))));
}

#[test]
fn monte_carlo_moments() {
    let id = monte_carlo_propagate(|v| Ok(vec![(v[0], 0.0)]), &[GaussianInput::new(0.0, 1.0)], 100_000, 5).unwrap();
    let o = id.outputs[0];
    assert!(o.mean.abs() < 0.02 && (o.total_variance - 1.0).abs() < 0.03);

    let lin = monte_carlo_propagate(|v| Ok(vec![(2.0 * v[0], 0.0)]), &[GaussianInput::new(1.0, 1.0)], 20_000, 6).unwrap();
    assert!((lin.outputs[0].total_variance / 4.0 - 1.0).abs() < 0.05);
}

#[test]
fn monte_carlo_splits_variance_and_is_seeded() {
    let f = |v: &[f64]| Ok(vec![(v[0], 0.5)]);
    let a = monte_carlo_propagate(f, &[GaussianInput::new(0.0, 1.0)], 5000, 9).unwrap();
    let b = monte_carlo_propagate(f, &[GaussianInput::new(0.0, 1.0)], 5000, 9).unwrap();
    assert_eq!(a, b);
    let o = a.outputs[0];
    assert!((o.expected_conditional_variance - 0.25).abs() < 1e-12);
    assert_eq!(o.total_variance, o.expected_conditional_variance + o.variance_of_means);
}

#[test]
fn monte_carlo_failures_and_sample_floor() {
    let flaky = |v: &[f64]| if v[0] > 1.0 { Err(KerrcatError::Fit("x".into())) } else { Ok(vec![(v[0], 0.0)]) };
    // P(x > 1) ≈ 16% exceeds the 5% budget
    assert!(matches!(
        monte_carlo_propagate(flaky, &[GaussianInput::new(0.0, 1.0)], 1000, 1),
        Err(KerrcatError::PropagationUnreliable { .. })
    ));
    assert!(monte_carlo_propagate(|v| Ok(vec![(v[0], 0.0)]), &[GaussianInput::new(0.0, 1.0)], 99, 1).is_err());
}
