mod common;

use common::{chain, fixed, StageCost};
use nalgebra::{DMatrix, DVector};
use trfe_core::baselines::*;
use trfe_core::freeenergy::{free_energy, minimize_free_objective, FixedPointOptions};
use trfe_core::systems::{double_integrator_system, dubins_system, scalar_lqg_system, DubinsParams, LinearSystem};
use trfe_core::{NoiseBank, TrfeError};

fn di(sigma_v: f64, horizon: usize) -> (LinearSystem<f64>, LinearSpec<f64>) {
    double_integrator_system(0.2, 0.3, 0.5, 0.4, sigma_v, [1.0, -0.5], 0.05, horizon).unwrap()
}

/// Open-loop expected cost of a fixed input sequence, by exact moment propagation.
fn exact_open_loop_cost(spec: &LinearSpec<f64>, u: &[f64]) -> f64 {
    let m = spec.b.ncols();
    let mut mean = spec.x0_mean.clone();
    let mut cov = spec.x0_cov.clone();
    let mut j = 0.0;
    for t in 0..=spec.horizon {
        j += (mean.transpose() * &spec.q * &mean)[(0, 0)] + (&spec.q * &cov).trace();
        if t == spec.horizon {
            break;
        }
        let ut = DVector::from_column_slice(&u[t * m..(t + 1) * m]);
        j += (ut.transpose() * &spec.r * &ut)[(0, 0)];
        mean = &spec.a * mean + &spec.b * ut;
        cov = &spec.a * cov * spec.a.transpose() + &spec.w;
    }
    j
}

/// Deterministic optimum from the normal equations of the stacked problem.
fn normal_equation_input(spec: &LinearSpec<f64>) -> Vec<f64> {
    let (n, t_max) = (spec.a.nrows(), spec.horizon);
    let mut hess = DMatrix::<f64>::zeros(t_max, t_max);
    let mut rhs = DVector::<f64>::zeros(t_max);
    for t in 1..=t_max {
        let mut g = DMatrix::zeros(n, t_max);
        let mut ap = DMatrix::identity(n, n);
        for s in (0..t).rev() {
            g.set_column(s, &(&ap * &spec.b).column(0));
            ap = &ap * &spec.a;
        }
        let c = &ap * &spec.x0_mean;
        hess += g.transpose() * &spec.q * &g;
        rhs -= g.transpose() * &spec.q * c;
    }
    hess += DMatrix::identity(t_max, t_max) * spec.r[(0, 0)];
    hess.lu().solve(&rhs).unwrap().iter().copied().collect()
}

#[test]
fn deterministic_lq_matches_normal_equations() {
    let (_, spec) = di(1.0, 25);
    let (u, cost) = lq_open_loop(&spec).unwrap();
    let oracle = normal_equation_input(&spec);
    assert!(u.iter().zip(&oracle).all(|(a, b)| (a - b).abs() < 1e-10));
    let mut det = spec.clone();
    det.x0_cov *= 0.0;
    det.w *= 0.0;
    assert!((exact_open_loop_cost(&det, &u) - cost).abs() < 1e-10 * cost);
}

#[test]
fn sample_average_open_loop_on_linear_system() {
    let (sys, spec) = di(1.0, 25);
    let bank = NoiseBank::for_system(&sys, 3, 2000);
    let ol = optimize_open_loop(&sys, &bank, &[0.0; 25]).unwrap();
    assert!(ol.converged);
    let (u, _) = lq_open_loop(&spec).unwrap();
    let scale = u.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let gap = ol.u_ol.iter().zip(&u).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    assert!(gap < 1e-4 * scale, "{gap}");
    let exact = exact_open_loop_cost(&spec, &u);
    assert!((ol.j_ol - exact).abs() < 4.0 * ol.std_error, "{} vs {exact}", ol.j_ol);
}

#[test]
fn zero_state_cost_gives_zero_open_loop() {
    let sys = chain(0.9, 10, StageCost::Zero, 0.5, fixed(1.0));
    let bank = NoiseBank::for_system(&sys, 0, 64);
    let ol = optimize_open_loop(&sys, &bank, &[0.7; 10]).unwrap();
    assert!(ol.u_ol.iter().all(|u| u.abs() < 1e-5));
    assert!(ol.j_ol < 1e-9);
}

#[test]
fn scalar_one_step_matches_affine_policy_search() {
    let (a, b, q, r, sw, sv, s0) = (0.9, 0.7, 1.3, 0.6, 0.4, 0.8, 0.5);
    let (_, spec) = scalar_lqg_system(a, b, q, r, sw, sv, s0, 1).unwrap();
    // u₀ = k y₀; zero means make the offset irrelevant
    let cost = |k: f64| {
        let eu = k * k * (s0 + sv * sv);
        let ex1 = (a + b * k).powi(2) * s0 + (b * k * sv).powi(2) + (b * sw).powi(2);
        q * s0 + 0.5 * r * eu + q * ex1
    };
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    let best_grid = (0..=100_000).map(|i| lo + (hi - lo) * i as f64 / 1e5).fold(f64::INFINITY, |m, k| m.min(cost(k)));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c1, c2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        if cost(c1) < cost(c2) {
            hi = c2;
        } else {
            lo = c1;
        }
    }
    let best = cost(0.5 * (lo + hi));
    let analytic = lqg_analytic_cost(&spec).unwrap();
    assert!(best <= best_grid + 1e-12);
    assert!((analytic - best).abs() < 1e-10, "{analytic} vs {best}");
}

#[test]
fn uninformative_sensor_reduces_to_open_loop() {
    let (_, spec) = di(1e8, 30);
    let (u, _) = lq_open_loop(&spec).unwrap();
    let open = exact_open_loop_cost(&spec, &u);
    let star = lqg_analytic_cost(&spec).unwrap();
    assert!((star - open).abs() < 0.01 * open);
}

#[test]
fn feedback_never_loses_to_open_loop() {
    for (sv, t) in [(0.01, 10), (0.3, 20), (1.0, 30), (10.0, 15)] {
        let (_, spec) = di(sv, t);
        let (u, _) = lq_open_loop(&spec).unwrap();
        assert!(exact_open_loop_cost(&spec, &u) >= lqg_analytic_cost(&spec).unwrap());
    }
}

#[test]
fn simulated_lqg_matches_analytic() {
    for (sv, seed) in [(0.2, 1), (1.0, 2), (5.0, 3)] {
        let (sys, spec) = di(sv, 30);
        let design = design_lqg(&sys, &lq_open_loop(&spec).unwrap().0).unwrap();
        let e = lqg_baseline(&sys, &design, 4000, seed).unwrap();
        let analytic = lqg_analytic_cost(&spec).unwrap();
        assert!((e.j_lqg - analytic).abs() < 3.0 * e.std_error, "{} ± {} vs {analytic}", e.j_lqg, e.std_error);
    }
}

#[test]
fn noiseless_lqg_reproduces_nominal_cost() {
    let sys = dubins_system(DubinsParams { sigma_w: 1e-9, sigma_v: 1e-3, ..Default::default() }).unwrap();
    let u: Vec<f64> = (0..100).map(|t| 0.05 * (t as f64 * 0.1).sin()).collect();
    let design = design_lqg(&sys, &u).unwrap();
    let e = lqg_baseline(&sys, &design, 20, 0).unwrap();
    let states = sys.simulate(sys.initial_state().mean().as_slice(), &u, &[0.0; 100]).unwrap();
    let nominal = sys.trajectory_cost(&states, &u).unwrap().total;
    assert!((e.j_lqg - nominal).abs() < 1e-5 * nominal, "{} vs {nominal}", e.j_lqg);
}

#[test]
fn lqg_rejects_bad_inputs() {
    let (sys, _) = di(1.0, 5);
    assert!(matches!(design_lqg(&sys, &[0.0; 4]), Err(TrfeError::Precondition(_))));
    let design = design_lqg(&sys, &[0.0; 5]).unwrap();
    assert!(matches!(lqg_baseline(&sys, &design, 0, 0), Err(TrfeError::Precondition(_))));
}

#[test]
fn dubins_open_loop_seed_stability_and_small_beta_limit() {
    let sys = dubins_system(DubinsParams::<f64>::default()).unwrap();
    let a = optimize_open_loop(&sys, &NoiseBank::for_system(&sys, 100, 1000), &[0.0; 100]).unwrap();
    let b = optimize_open_loop(&sys, &NoiseBank::for_system(&sys, 200, 1000), &[0.0; 100]).unwrap();
    assert!(a.converged && b.converged);
    let se = a.std_error.hypot(b.std_error);
    assert!((a.j_ol - b.j_ol).abs() < 3.0 * se, "{} vs {}", a.j_ol, b.j_ol);

    let bank = NoiseBank::for_system(&sys, 100, 1000);
    let opts = FixedPointOptions::default();
    let fp = minimize_free_objective(&sys, &bank, 1e-3, &a.u_ol, &opts).unwrap();
    assert!((fp.f_star - a.j_ol).abs() < 3.0 * a.std_error, "{} vs {}", fp.f_star, a.j_ol);
    // Jensen at the open-loop input
    let costs = sys.batch_state_costs(&a.u_ol, &bank).unwrap();
    let f_ol = free_energy(&costs, 1e-3).unwrap().value + sys.control_cost_total(&a.u_ol).unwrap();
    assert!(f_ol <= a.j_ol + 1e-12);
}
