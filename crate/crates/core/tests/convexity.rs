mod common;

use common::{chain, fixed, StageCost};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trfe_core::convexity::*;
use trfe_core::systems::{double_integrator_system, dubins_system, DubinsParams};
use trfe_core::TrfeError;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

#[test]
fn beta_ceiling_formula() {
    assert_eq!(beta_max(0.5, 1.0, 1.0).unwrap(), BetaCeiling::Finite(1.0));
    let b = beta_max(0.44f64, 1.0, 0.01).unwrap().value().unwrap();
    assert!((b - 127.27).abs() < 5e-3, "{b}");
    assert_eq!(beta_max(0.0, 1.0, 0.01).unwrap(), BetaCeiling::Infinite);
    assert_eq!(BetaCeiling::<f64>::Infinite.value(), Some(f64::INFINITY));
    assert_eq!(beta_max(1.0, 1.0, 0.01).unwrap(), BetaCeiling::Undefined);
    assert!(!beta_max(2.0, 1.0, 0.01).unwrap().is_certified());
    assert!(matches!(beta_max(-0.1, 1.0, 1.0), Err(TrfeError::Domain(_))));
    assert!(beta_max(0.1, 0.0, 1.0).is_err());
}

/// Stacked input-to-state map from unit-input rollouts at zero initial state.
fn unit_response(sys: &trfe_core::systems::LinearSystem<f64>) -> Vec<DMatrix<f64>> {
    let (n, t_max) = (sys.state_dim(), sys.horizon());
    let zw = vec![0.0; t_max];
    let x0 = vec![0.0; n];
    let mut g = vec![DMatrix::zeros(n, t_max); t_max + 1];
    for k in 0..t_max {
        let mut u = vec![0.0; t_max];
        u[k] = 1.0;
        let xs = sys.simulate(&x0, &u, &zw).unwrap();
        for t in 0..=t_max {
            for i in 0..n {
                g[t][(i, k)] = xs[(t, i)];
            }
        }
    }
    g
}

#[test]
fn linear_quadratic_hessian_is_gram_matrix() {
    let (sys, spec) = double_integrator_system(0.2, 0.3, 0.5, 0.4, 1.0, [1.0, -0.5], 0.1, 15).unwrap();
    let g = unit_response(&sys);
    let mut gram = DMatrix::zeros(15, 15);
    for gt in &g {
        gram += gt.transpose() * &spec.q * gt * 2.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let zeta: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
    let h = hessian_s(&sys, &zeta).unwrap();
    assert!(max_abs(&(&h - &gram)) <= 1e-12 * max_abs(&gram));
}

#[test]
fn zero_state_cost_has_zero_hessian() {
    let sys = chain(0.9, 8, StageCost::Zero, 0.5, fixed(1.0));
    let h = hessian_s(&sys, &[0.3; 8]).unwrap();
    assert!(h.iter().all(|&v| v == 0.0));
    let c = estimate_semiconvexity(&sys, &[0.0; 8], 16, 3).unwrap();
    assert_eq!(c.alpha_hat, 0.0);
    assert_eq!(c.beta_max_hat, BetaCeiling::Infinite);
}

#[test]
fn convex_quadratic_gives_unbounded_ceiling() {
    let (sys, _) = double_integrator_system(0.1, 0.1, 1.0, 0.3, 1.0, [1.0, 0.0], 0.1, 20).unwrap();
    let c = estimate_semiconvexity(&sys, &[0.0; 20], 32, 7).unwrap();
    assert_eq!(c.alpha_hat, 0.0);
    assert_eq!(c.beta_max_hat, BetaCeiling::Infinite);
    assert!(c.sampled);
    assert_eq!(c.method, HessianMethod::DualNumber);
    assert_eq!(c.n_alpha, 32);
}

#[test]
fn cosine_cost_on_inputs() {
    // a = 0 makes x_{t+1} = ζ_t, so S = Σ (1 − cos ζ_t) and ∇²S = diag(cos ζ)
    let sys = chain(0.0, 6, StageCost::OneMinusCos, 3.0, fixed(0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let zeta: Vec<f64> = (0..6).map(|_| rng.random_range(-4.0..4.0)).collect();
        let h = hessian_s(&sys, &zeta).unwrap();
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(6, zeta.iter().map(|z| z.cos())));
        assert!(max_abs(&(&h - &expect)) < 1e-14);
        let s = realized_cost(&sys, &zeta).unwrap();
        assert!((s - zeta.iter().map(|z| 1.0 - z.cos()).sum::<f64>()).abs() < 1e-13);
    }
    let c = estimate_semiconvexity(&sys, &[0.0; 6], 512, 11).unwrap();
    assert!(c.alpha_hat > 0.99 && c.alpha_hat <= 1.0, "{}", c.alpha_hat);
    let expect = (1.0 - c.alpha_hat) / (c.alpha_hat * 9.0);
    assert!((c.beta_max_hat.value().unwrap() - expect).abs() < 1e-12);
    let alphas: Vec<f64> = [1, 2, 4, 16, 64, 256, 512].iter().map(|&n| c.truncated(n).unwrap().alpha_hat).collect();
    assert!(alphas.windows(2).all(|w| w[1] >= w[0]));
    assert!(alphas[0] < 0.99);
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(b).max(1e-300)
}

#[test]
fn dual_matches_finite_differences_on_dubins() {
    let sys = dubins_system(DubinsParams { horizon: 40, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..2 {
        let zeta: Vec<f64> = (0..40).map(|_| rng.random_range(-0.5..0.5)).collect();
        let hd = hessian_s(&sys, &zeta).unwrap();
        let hf = hessian_s_fd(&sys, &zeta, 1e-4).unwrap();
        assert!(rel_diff(&hf, &hd) < 1e-4, "{}", rel_diff(&hf, &hd));
        let raw = hessian_s_unsymmetrized(&sys, &zeta).unwrap();
        assert!(max_abs(&(&raw - raw.transpose())) <= 1e-8 * max_abs(&raw).max(1.0));
    }
}

#[test]
fn dual_matches_finite_differences_on_linear() {
    let (sys, _) = double_integrator_system(0.2, 0.3, 0.5, 0.4, 1.0, [1.0, -0.5], 0.1, 12).unwrap();
    let zeta: Vec<f64> = (0..12).map(|k| (k as f64).sin()).collect();
    let hd = hessian_s(&sys, &zeta).unwrap();
    let hf = hessian_s_fd(&sys, &zeta, 1e-4).unwrap();
    assert!(rel_diff(&hf, &hd) < 1e-4);
}

#[test]
fn rejects_bad_inputs() {
    let sys = chain(0.9, 4, StageCost::Quadratic(1.0), 0.5, fixed(0.0));
    assert!(matches!(hessian_s(&sys, &[0.0; 3]), Err(TrfeError::Precondition(_))));
    assert!(matches!(hessian_s(&sys, &[0.0, f64::NAN, 0.0, 0.0]), Err(TrfeError::Precondition(_))));
    assert!(matches!(estimate_semiconvexity(&sys, &[0.0; 4], 0, 0), Err(TrfeError::Precondition(_))));
}

#[test]
fn independent_of_worker_count() {
    let sys = dubins_system(DubinsParams { horizon: 20, ..Default::default() }).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let a = one.install(|| estimate_semiconvexity(&sys, &[0.0; 20], 8, 4).unwrap());
    let b = estimate_semiconvexity(&sys, &[0.0; 20], 8, 4).unwrap();
    assert_eq!(a, b);
}
