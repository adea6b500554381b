use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trfe_core::baselines::{design_lqg, lq_open_loop, lqg_analytic_cost, lqg_baseline};
use trfe_core::certificates::*;
use trfe_core::linalg;
use trfe_core::model::CoercivityParams;
use trfe_core::systems::{dubins_system, linear_system, DubinsParams, LinearParams};
use trfe_core::TrfeError;

fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(r, c, v)
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.2
}

#[test]
fn gaussian_mi_simple_cases() {
    let one = m(1, 1, &[1.0]);
    assert_eq!(gaussian_mi_bound(&one, &m(1, 1, &[0.0])).unwrap(), 0.0);
    assert!((gaussian_mi_bound(&one, &one).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
    assert!(matches!(gaussian_mi_bound(&one, &m(1, 1, &[-1.0])), Err(TrfeError::Domain(_))));
    assert!(gaussian_mi_bound(&one, &DMatrix::identity(2, 2)).is_err());
}

#[test]
fn gaussian_mi_equals_joint_gaussian_mutual_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let sx = random_spd(&mut rng, 2);
        let sv = random_spd(&mut rng, 2);
        // I(x; x + v) = ½ log det Σ_y − ½ log det Σ_v, from the joint covariance
        let joint = DMatrix::from_fn(4, 4, |r, c| {
            let (br, bc) = (r / 2, c / 2);
            let s = sx[(r % 2, c % 2)];
            if br == 1 && bc == 1 {
                s + sv[(r % 2, c % 2)]
            } else {
                s
            }
        });
        let sy = joint.view((2, 2), (2, 2)).into_owned();
        let exact = 0.5 * (sy.determinant() / sv.determinant()).ln();
        // and the chain-rule form through the Schur complement
        let cond = &sx - &sx * sy.clone().try_inverse().unwrap() * &sx;
        let via_schur = 0.5 * (sx.determinant() / cond.determinant()).ln();
        let bound = gaussian_mi_bound(&sv, &sx).unwrap();
        assert!((bound - exact).abs() < 1e-12);
        assert!((bound - via_schur).abs() < 1e-9);
    }
}

fn lipschitz(b: f64) -> CICertificate<f64> {
    lipschitz_certificate(LipschitzParams {
        lipschitz: 1.0,
        coercivity: CoercivityParams::new(1.0, b).unwrap(),
        horizon: 10,
        obs_dim: 2,
        lambda_min: 1.0,
    })
    .unwrap()
}

#[test]
fn lipschitz_substitution() {
    let c = lipschitz(0.0);
    assert_eq!(c.kind(), "lipschitz");
    assert!((c.evaluate(20.0) - 10.0 * 2f64.ln()).abs() < 1e-12);
    assert_eq!(c.evaluate(0.0), 0.0);
    assert!(lipschitz(0.5).evaluate(0.0) > 0.0);
    let bad = LipschitzParams {
        lipschitz: 0.0,
        coercivity: CoercivityParams::new(1.0, 0.0).unwrap(),
        horizon: 10,
        obs_dim: 2,
        lambda_min: 1.0,
    };
    assert!(matches!(lipschitz_certificate(bad), Err(TrfeError::CertificateHypothesis(_))));
}

#[test]
fn waterfill_hand_examples() {
    let a = waterfill_allocation(&[1.0], 3.0).unwrap();
    assert!((a.value - 2f64.ln()).abs() < 1e-15 && (a.allocations[0] - 3.0).abs() < 1e-15);

    let a = waterfill_allocation(&[1.0, 1.0 / 3.0], 2.0).unwrap();
    assert!((a.value - 0.5 * 3f64.ln()).abs() < 1e-15);
    assert_eq!(a.allocations, vec![2.0, 0.0]);
    assert!((a.water_level - 3.0).abs() < 1e-15);
    // grid search over the feasible segment n₁ + n₂ = 2
    let grid_best = (0..=20_000)
        .map(|k| {
            let n1 = 2.0 * k as f64 / 20_000.0;
            0.5 * ((1.0 + n1).ln() + (1.0 + (2.0 - n1) / 3.0).ln())
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((grid_best - a.value).abs() < 1e-9);

    let z = waterfill_allocation(&[1.0, 2.0], 0.0).unwrap();
    assert_eq!((z.value, z.allocations.clone()), (0.0, vec![0.0, 0.0]));
    assert!(matches!(waterfill_allocation(&[0.0, 0.0], 1.0), Err(TrfeError::CertificateHypothesis(_))));
    assert!(matches!(waterfill_allocation(&[1.0], -1.0), Err(TrfeError::Domain(_))));
}

#[test]
fn dubins_waterfill_closed_form() {
    for sv in [0.1f64, 1.0, 7.0] {
        let sys = dubins_system(DubinsParams { sigma_v: sv, ..Default::default() }).unwrap();
        let c = waterfill_certificate(&sys).unwrap();
        assert_eq!(c.kind(), "waterfill");
        let t1 = 101.0;
        for j in [0.0, 0.3, 2.0, 50.0] {
            let expect = t1 * (1.0 + j / (2.0 * t1 * sv * sv)).ln();
            assert!((c.evaluate(j) - expect).abs() < 1e-12 * (1.0 + expect));
        }
    }
}

#[test]
fn sensor_outside_cost_subspace_is_rejected() {
    let q = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1.0, 0.0]));
    let h = m(1, 3, &[0.0, 0.0, 1.0]);
    let err = WaterfillParams::from_linear_sensor(&h, &q, &m(1, 1, &[1.0]), 5).unwrap_err();
    assert!(matches!(err, TrfeError::CertificateHypothesis(_)));
    // heading-blind sensor is fine
    let h = m(1, 3, &[1.0, 2.0, 0.0]);
    let p = WaterfillParams::from_linear_sensor(&h, &q, &m(1, 1, &[1.0]), 5).unwrap();
    assert_eq!(p.steps, 6);
}

/// Euclidean projection onto `{λ ≥ 0, Σλ = b}`.
fn project_simplex(v: &[f64], b: f64) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (k, &x) in s.iter().enumerate() {
        acc += x;
        let t = (acc - b) / (k + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projected-gradient ascent on `Σ_t ½ log det(I + Σ_v⁻¹ H M_t Hᵀ)` over
/// PSD `M_t` with `Σ_t tr(Q M_t) = J`, in the variables `P_t = Q^{½} M_t Q^{½}`.
fn matrix_program_oracle(h: &DMatrix<f64>, q: &DMatrix<f64>, sv: &DMatrix<f64>, steps: usize, j: f64) -> f64 {
    let n = q.nrows();
    let qi = linalg::sym_fn(q, |l| 1.0 / l.sqrt());
    let hq = h * &qi;
    let value = |p: &DMatrix<f64>| 0.5 * (sv + &hq * p * hq.transpose()).determinant().ln() - 0.5 * sv.determinant().ln();
    // different starting allocation per step so uniformity is not assumed
    let mut ps: Vec<DMatrix<f64>> = (0..steps)
        .map(|t| DMatrix::identity(n, n) * (j * 2.0 * (t + 1) as f64 / (steps * (steps + 1) * n) as f64))
        .collect();
    let lip = {
        let g = hq.transpose() * sv.clone().try_inverse().unwrap() * &hq;
        0.5 * linalg::sym_eigenvalues(&g).max().powi(2)
    };
    let step = 1.0 / lip.max(1e-12);
    for _ in 0..20_000 {
        let mut eigs = Vec::new();
        let mut vecs = Vec::new();
        for p in ps.iter() {
            let inner = (sv + &hq * p * hq.transpose()).try_inverse().unwrap();
            let grad = hq.transpose() * inner * &hq * 0.5;
            let e = nalgebra::SymmetricEigen::new(linalg::symmetrize(&(p + grad * step)));
            eigs.extend(e.eigenvalues.iter().copied());
            vecs.push(e.eigenvectors);
        }
        let lam = project_simplex(&eigs, j);
        for (t, v) in vecs.iter().enumerate() {
            let d = DMatrix::from_diagonal(&DVector::from_row_slice(&lam[t * n..(t + 1) * n]));
            ps[t] = v * d * v.transpose();
        }
    }
    ps.iter().map(value).sum()
}

#[test]
fn closed_form_matches_matrix_program() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..3 {
        let q = random_spd(&mut rng, 3);
        let h = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let sv = random_spd(&mut rng, 2);
        let steps = 3;
        let cert = CICertificate::waterfill(WaterfillParams::from_linear_sensor(&h, &q, &sv, steps - 1).unwrap()).unwrap();
        let j = rng.random_range(0.1..5.0);
        let oracle = matrix_program_oracle(&h, &q, &sv, steps, j);
        assert!((cert.evaluate(j) - oracle).abs() < 1e-6, "{} vs {oracle}", cert.evaluate(j));
    }
}

proptest! {
    #[test]
    fn waterfill_kkt_and_random_feasible_allocations(
        gains in prop::collection::vec(0.0f64..5.0, 1..6),
        budget in 0.0f64..10.0,
        seed in 0u64..1000,
    ) {
        prop_assume!(gains.iter().any(|&g| g > 1e-6));
        let a = waterfill_allocation(&gains, budget).unwrap();
        prop_assert!(a.kkt_residual <= 1e-10);
        prop_assert!(a.allocations.iter().all(|&n| n >= 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let raw: Vec<f64> = gains.iter().map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let v: f64 = raw.iter().zip(&gains).map(|(r, g)| 0.5 * (g * budget * r / s).ln_1p()).sum();
            prop_assert!(v <= a.value + 1e-12);
        }
    }

    #[test]
    fn waterfill_concave_nondecreasing(gains in prop::collection::vec(0.01f64..5.0, 1..5), step in 0.01f64..2.0) {
        let vals: Vec<f64> = (0..20).map(|k| waterfill_allocation(&gains, step * k as f64).unwrap().value).collect();
        for w in vals.windows(3) {
            prop_assert!(w[1] >= w[0] - 1e-14);
            prop_assert!(w[2] - w[1] <= w[1] - w[0] + 1e-12);
        }
    }
}

#[test]
fn evaluate_strictly_increasing_both_kinds() {
    let sys = dubins_system(DubinsParams::default()).unwrap();
    for c in [lipschitz(0.0), waterfill_certificate(&sys).unwrap()] {
        let vals: Vec<f64> = (0..200).map(|k| c.evaluate(0.05 * k as f64)).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]), "{}", c.kind());
    }
}

#[test]
fn closures_act_as_budgets() {
    let f = |j: f64| 2.0 * j;
    assert_eq!(f.budget(1.5), 3.0);
}

/// Exact closed-loop second moments of `x⁺ = Ax + B(u + w)`, `y = Hx + v`
/// under `u_t = −K_t x̂_{t|t}` with filter gains `L_t`. Returns the expected
/// cost and the per-step `½ log det(I + Σ_v⁻¹ H Cov(x_t) Hᵀ)`.
#[allow(clippy::too_many_arguments)]
fn closed_loop_moments(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    sw: &DMatrix<f64>,
    sv: &DMatrix<f64>,
    x0: &DVector<f64>,
    p0: &DMatrix<f64>,
    k: &[DMatrix<f64>],
    l: &[DMatrix<f64>],
) -> (f64, Vec<f64>) {
    let n = a.nrows();
    let p = h.nrows();
    let t_max = k.len();
    // z = (x, x̂_{t|t−1}); the estimate starts at the prior mean
    let mut mean = DVector::zeros(2 * n);
    mean.rows_mut(0, n).copy_from(x0);
    mean.rows_mut(n, n).copy_from(x0);
    let mut cov = DMatrix::zeros(2 * n, 2 * n);
    cov.view_mut((0, 0), (n, n)).copy_from(p0);
    let mut cost = 0.0;
    let mut mi = Vec::new();
    let eye = DMatrix::<f64>::identity(n, n);
    for t in 0..=t_max {
        let cx = cov.view((0, 0), (n, n)).into_owned();
        let mx = mean.rows(0, n).into_owned();
        cost += (q * (&cx + &mx * mx.transpose())).trace();
        mi.push(gaussian_mi_bound(sv, &(h * &cx * h.transpose())).unwrap());
        if t == t_max {
            break;
        }
        // x̂_post = (I − LH) x̂ + L H x + L v, u = −K x̂_post
        let lh = &l[t] * h;
        let mut post_z = DMatrix::zeros(n, 2 * n);
        post_z.view_mut((0, 0), (n, n)).copy_from(&lh);
        post_z.view_mut((0, n), (n, n)).copy_from(&(&eye - &lh));
        let post_v = l[t].clone();
        let u_z = -(&k[t] * &post_z);
        let u_v = -(&k[t] * &post_v);
        let u_mean = &u_z * &mean;
        let u_cov = &u_z * &cov * u_z.transpose() + &u_v * sv * u_v.transpose();
        cost += 0.5 * (r * (&u_cov + &u_mean * u_mean.transpose())).trace();
        // next: x⁺ = A x + B u + B w, x̂⁺ = A x̂_post + B u
        let mut f = DMatrix::zeros(2 * n, 2 * n);
        let mut x_row = DMatrix::zeros(n, 2 * n);
        x_row.view_mut((0, 0), (n, n)).copy_from(a);
        let x_next = &x_row + b * &u_z;
        let e_next = a * &post_z + b * &u_z;
        f.view_mut((0, 0), (n, 2 * n)).copy_from(&x_next);
        f.view_mut((n, 0), (n, 2 * n)).copy_from(&e_next);
        let mut gv = DMatrix::zeros(2 * n, p);
        gv.view_mut((0, 0), (n, p)).copy_from(&(b * &u_v));
        gv.view_mut((n, 0), (n, p)).copy_from(&(a * &post_v + b * &u_v));
        let mut gw = DMatrix::zeros(2 * n, b.ncols());
        gw.view_mut((0, 0), (n, b.ncols())).copy_from(b);
        mean = &f * &mean;
        cov = &f * &cov * f.transpose() + &gv * sv * gv.transpose() + &gw * sw * gw.transpose();
    }
    (cost, mi)
}

#[test]
fn certificate_bounds_closed_loop_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..6 {
        let params = LinearParams {
            a: m(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            b: m(2, 1, &[0.005, 0.1]),
            h: m(1, 2, &[1.0, 0.0]),
            q: m(2, 2, &[1.0, 0.0, 0.0, 0.2]),
            r: m(1, 1, &[rng.random_range(0.05..1.0)]),
            sigma_w: m(1, 1, &[rng.random_range(0.01..1.0)]),
            sigma_v: m(1, 1, &[rng.random_range(0.01..2.0)]),
            x0_mean: DVector::from_row_slice(&[1.0, 0.0]),
            x0_cov: DMatrix::identity(2, 2) * 0.1,
            horizon: 20,
        };
        let (sys, spec) = linear_system(params.clone()).unwrap();
        // about the deterministic optimum the deviation controller is the full LQG policy
        let design = design_lqg(&sys, &lq_open_loop(&spec).unwrap().0).unwrap();
        // LQG gains on even trials, arbitrary stabilizing-ish gains on odd ones
        let gains: Vec<DMatrix<f64>> = if trial % 2 == 0 {
            design.gains.clone()
        } else {
            (0..20).map(|_| m(1, 2, &[rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)])).collect()
        };
        let (j_exact, mi) = closed_loop_moments(
            &params.a,
            &params.b,
            &params.h,
            &params.q,
            &params.r,
            &params.sigma_w,
            &params.sigma_v,
            &params.x0_mean,
            &params.x0_cov,
            &gains,
            &design.filter_gains,
        );
        let total: f64 = mi.iter().sum();
        let cert = waterfill_certificate(&sys).unwrap();
        assert!(total <= cert.evaluate(j_exact) + 1e-9, "trial {trial}: {total} > {}", cert.evaluate(j_exact));
        if trial % 2 == 0 {
            let emp = lqg_baseline(&sys, &design, 4000, trial as u64).unwrap();
            assert!((lqg_analytic_cost(&spec).unwrap() - j_exact).abs() < 1e-9 * j_exact);
            assert!((emp.j_lqg - j_exact).abs() < 4.0 * emp.std_error, "{} vs {j_exact}", emp.j_lqg);
            assert!(total <= cert.evaluate(emp.j_lqg) + 1e-9);
        }
    }
}
