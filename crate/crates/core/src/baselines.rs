//! Reference costs the bounds are compared against: the optimal open-loop
//! cost, a linearized LQG controller simulated on the true dynamics, and the
//! exact partially observed LQG optimum for linear-Gaussian systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::autodiff::Dual;
use crate::error::{Result, TrfeError};
use crate::linalg;
use crate::model::{Dynamics, NoiseBank, SystemModel};
use crate::scalar::Real;
use crate::stats;

/// Time-invariant linear-Gaussian problem
/// `x⁺ = A x + w̃`, `w̃ ~ N(0, W)`, `y = H x + v`, cost `Σ_{t≤T} xᵀQx + Σ_{t<T} uᵀRu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSpec<R: Real> {
    pub a: DMatrix<R>,
    pub b: DMatrix<R>,
    pub h: DMatrix<R>,
    /// Process noise covariance in state space.
    pub w: DMatrix<R>,
    pub sigma_v: DMatrix<R>,
    pub q: DMatrix<R>,
    pub r: DMatrix<R>,
    pub x0_mean: DVector<R>,
    pub x0_cov: DMatrix<R>,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopResult<R> {
    pub u_ol: Vec<R>,
    /// Sample-average optimum of `J^x + J^u`.
    pub j_ol: R,
    pub std_error: R,
    pub grad_norm: R,
    pub iterations: usize,
    pub converged: bool,
}

const BATCH_CHUNK: usize = 256;

/// Sample-average cost and its gradient in `u` by an adjoint sweep over
/// forward-mode local Jacobians.
pub fn open_loop_objective<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    bank: &NoiseBank<R>,
    u: &[R],
) -> Result<(R, Vec<R>, Vec<R>)> {
    if bank.is_empty() {
        return Err(TrfeError::Precondition("noise bank is empty".into()));
    }
    let len = sys.input_len();
    if u.len() != len {
        return Err(TrfeError::Precondition(format!("control sequence must have length {len}")));
    }
    let n_chunks = bank.len().div_ceil(BATCH_CHUNK);
    let parts: Vec<(Vec<R>, Vec<R>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut grad = vec![R::zero(); len];
            let mut costs = Vec::with_capacity(BATCH_CHUNK);
            let mut scratch = AdjointScratch::new(sys);
            for i in c * BATCH_CHUNK..((c + 1) * BATCH_CHUNK).min(bank.len()) {
                costs.push(scratch.sample(sys, bank, u, i, &mut grad)?);
            }
            Ok((costs, grad))
        })
        .collect::<Result<_>>()?;
    let inv_n = R::one() / R::lit(bank.len() as f64);
    let mut grad = vec![R::zero(); len];
    let mut costs = Vec::with_capacity(bank.len());
    for (c, g) in parts {
        costs.extend(c);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    for g in grad.iter_mut() {
        *g *= inv_n;
    }
    let m = sys.control_dim();
    for t in 0..sys.horizon() {
        let gr = sys.control_cost_gradient(t, &u[t * m..(t + 1) * m]);
        for k in 0..m {
            grad[t * m + k] += gr[k];
        }
    }
    let ju = sys.control_cost_total(u)?;
    let mean = costs.iter().fold(R::zero(), |a, &c| a + c) * inv_n;
    Ok((mean + ju, grad, costs))
}

/// Reusable buffers for one worker's adjoint sweeps.
struct AdjointScratch<R: Real> {
    xs: Vec<R>,
    w: Vec<R>,
    xd: Vec<Dual<R>>,
    ud: Vec<Dual<R>>,
    wd: Vec<Dual<R>>,
    next: Vec<Dual<R>>,
    lambda: Vec<R>,
    lambda_prev: Vec<R>,
}

impl<R: Real> AdjointScratch<R> {
    fn new<D: Dynamics<R>>(sys: &SystemModel<R, D>) -> Self {
        let (n, m, nw, t_max) = (sys.state_dim(), sys.control_dim(), sys.noise_dim(), sys.horizon());
        let c = Dual::constant(R::zero());
        Self {
            xs: vec![R::zero(); (t_max + 1) * n],
            w: vec![R::zero(); t_max * nw],
            xd: vec![c; n],
            ud: vec![c; m],
            wd: vec![c; nw],
            next: vec![c; n],
            lambda: vec![R::zero(); n],
            lambda_prev: vec![R::zero(); n],
        }
    }

    /// Accumulates `∂J^x/∂u` of sample `i` into `grad` and returns its `J^x`.
    fn sample<D: Dynamics<R>>(
        &mut self,
        sys: &SystemModel<R, D>,
        bank: &NoiseBank<R>,
        u: &[R],
        i: usize,
        grad: &mut [R],
    ) -> Result<R> {
        let (n, m, nw, t_max) = (sys.state_dim(), sys.control_dim(), sys.noise_dim(), sys.horizon());
        let dyn_ = sys.dynamics();
        let states = sys.rollout(u, bank, i)?;
        for t in 0..=t_max {
            for k in 0..n {
                self.xs[t * n + k] = states[(t, k)];
            }
        }
        self.w.copy_from_slice(&sys.scaled_noise(bank, i));
        let mut jx = R::zero();
        for t in 0..=t_max {
            jx += dyn_.state_cost(t, &self.xs[t * n..(t + 1) * n]);
        }
        self.cost_gradient(sys, t_max);
        for t in (0..t_max).rev() {
            // λ_t = ∇q_t + Aᵀλ_{t+1}, g_t = Bᵀλ_{t+1}, by one forward pass per input
            let x = &self.xs[t * n..(t + 1) * n];
            for k in 0..n {
                self.xd[k] = Dual::constant(x[k]);
            }
            for k in 0..m {
                self.ud[k] = Dual::constant(u[t * m + k]);
            }
            for k in 0..nw {
                self.wd[k] = Dual::constant(self.w[t * nw + k]);
            }
            for j in 0..n + m {
                if j < n {
                    self.xd[j].eps = R::one();
                } else {
                    self.ud[j - n].eps = R::one();
                }
                dyn_.step(t, &self.xd, &self.ud, &self.wd, &mut self.next);
                let mut vjp = R::zero();
                for r in 0..n {
                    vjp += self.lambda[r] * self.next[r].eps;
                }
                if j < n {
                    self.xd[j].eps = R::zero();
                    self.lambda_prev[j] = vjp;
                } else {
                    self.ud[j - n].eps = R::zero();
                    grad[t * m + j - n] += vjp;
                }
            }
            std::mem::swap(&mut self.lambda, &mut self.lambda_prev);
            self.cost_gradient_add(sys, t);
        }
        Ok(jx)
    }

    /// `λ ← ∇q_t(x_t)`.
    fn cost_gradient<D: Dynamics<R>>(&mut self, sys: &SystemModel<R, D>, t: usize) {
        self.lambda.iter_mut().for_each(|l| *l = R::zero());
        self.cost_gradient_add(sys, t);
    }

    /// `λ ← λ + ∇q_t(x_t)`.
    fn cost_gradient_add<D: Dynamics<R>>(&mut self, sys: &SystemModel<R, D>, t: usize) {
        let n = sys.state_dim();
        let x = &self.xs[t * n..(t + 1) * n];
        for k in 0..n {
            self.xd[k] = Dual::constant(x[k]);
        }
        for j in 0..n {
            self.xd[j].eps = R::one();
            self.lambda[j] += sys.dynamics().state_cost(t, &self.xd).eps;
            self.xd[j].eps = R::zero();
        }
    }
}

/// Minimizes the sample-average trajectory cost by L-BFGS with Armijo
/// backtracking, stopping once `‖∇‖₂ ≤ 10⁻⁵(1 + |f|)`.
pub fn optimize_open_loop<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    bank: &NoiseBank<R>,
    u_init: &[R],
) -> Result<OpenLoopResult<R>> {
    const MAX_ITERS: usize = 1000;
    const MAX_BACKTRACKS: usize = 60;
    const MEMORY: usize = 8;
    let armijo = R::lit(1e-4);
    let tol = |f: R| R::lit(1e-5) * (R::one() + f.abs());
    let mut u = u_init.to_vec();
    let (mut f, mut g, mut costs) = open_loop_objective(sys, bank, &u)?;
    let mut history: std::collections::VecDeque<(Vec<R>, Vec<R>, R)> = std::collections::VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        if norm2(&g) <= tol(f) {
            converged = true;
            break;
        }
        let mut dir = lbfgs_direction(&g, &history);
        let mut slope = dot(&g, &dir);
        if !(slope < R::zero()) {
            history.clear();
            dir = g.iter().map(|&x| -x).collect();
            slope = dot(&g, &dir);
        }
        let mut s = if history.is_empty() { R::one() / norm2(&g).max(R::one()) } else { R::one() };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<R> = u.iter().zip(&dir).map(|(&a, &d)| a + s * d).collect();
            match open_loop_objective(sys, bank, &trial) {
                Ok((ft, gt, ct)) if ft <= f + armijo * s * slope => {
                    accepted = Some((trial, ft, gt, ct));
                    break;
                }
                _ => s *= R::lit(0.5),
            }
        }
        let Some((un, fnew, gn, cn)) = accepted else {
            log::warn!("open-loop line search failed at iteration {iterations}");
            break;
        };
        let sv: Vec<R> = un.iter().zip(&u).map(|(&a, &b)| a - b).collect();
        let yv: Vec<R> = gn.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&sv, &yv);
        if sy > R::lit(1e-12) * norm2(&sv) * norm2(&yv) {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((sv, yv, R::one() / sy));
        }
        u = un;
        f = fnew;
        g = gn;
        costs = cn;
        iterations += 1;
    }
    if !converged {
        converged = norm2(&g) <= tol(f);
    }
    Ok(OpenLoopResult {
        std_error: stats::mean_std_error(&costs, bank.is_antithetic()),
        grad_norm: norm2(&g),
        u_ol: u,
        j_ol: f,
        iterations,
        converged,
    })
}

/// Two-loop recursion for `−H⁻¹g`.
fn lbfgs_direction<R: Real>(g: &[R], history: &std::collections::VecDeque<(Vec<R>, Vec<R>, R)>) -> Vec<R> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = *rho * dot(s, &q);
        for (qk, &yk) in q.iter_mut().zip(y) {
            *qk -= a * yk;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = *rho * dot(y, &q);
        for (qk, &sk) in q.iter_mut().zip(s) {
            *qk += (a - b) * sk;
        }
    }
    q.iter().map(|&v| -v).collect()
}

fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).fold(R::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm2<R: Real>(v: &[R]) -> R {
    v.iter().fold(R::zero(), |a, &x| a + x * x).sqrt()
}

/// Linearized design about a nominal trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LqgDesign<R: Real> {
    /// `(T+1)` nominal states (noise-free rollout of `u_ref`).
    pub x_ref: Vec<DVector<R>>,
    /// `T` feedforward inputs.
    pub u_ref: Vec<DVector<R>>,
    pub a: Vec<DMatrix<R>>,
    pub b: Vec<DMatrix<R>>,
    /// `(T+1)` sensor Jacobians.
    pub h: Vec<DMatrix<R>>,
    /// `(T+1)` state weights from half the cost Hessian.
    pub q_lin: Vec<DMatrix<R>>,
    pub r_lin: Vec<DMatrix<R>>,
    /// Linearized process noise covariances `G Σ_w Gᵀ`.
    pub w: Vec<DMatrix<R>>,
    /// LQR gains `K_t`.
    pub gains: Vec<DMatrix<R>>,
    /// Riccati value matrices `P_t`, `t = 0..=T`.
    pub value: Vec<DMatrix<R>>,
    /// Kalman gains `L_t`, `t = 0..T`.
    pub filter_gains: Vec<DMatrix<R>>,
    /// Prior covariances `Σ_{t|t−1}`.
    pub prior_cov: Vec<DMatrix<R>>,
    /// Posterior covariances `Σ_{t|t}`.
    pub posterior_cov: Vec<DMatrix<R>>,
}

/// Backward Riccati pass: `P_T = Q_T`, `K_t = (R + BᵀPB)⁻¹BᵀPA`, `P_t = Q + AᵀP(A − BK)`.
pub fn lqr_backward<R: Real>(
    a: &[DMatrix<R>],
    b: &[DMatrix<R>],
    q: &[DMatrix<R>],
    r: &[DMatrix<R>],
) -> Result<(Vec<DMatrix<R>>, Vec<DMatrix<R>>)> {
    let t_max = a.len();
    let mut value = vec![DMatrix::zeros(0, 0); t_max + 1];
    let mut gains = vec![DMatrix::zeros(0, 0); t_max];
    value[t_max] = q[t_max].clone();
    for t in (0..t_max).rev() {
        let p = &value[t + 1];
        let bp = b[t].transpose() * p;
        let s = &r[t] + &bp * &b[t];
        let s_inv = linalg::spd_inverse(&linalg::symmetrize(&s))?;
        let k = s_inv * &bp * &a[t];
        let pt = &q[t] + a[t].transpose() * p * (&a[t] - &b[t] * &k);
        let pt = linalg::symmetrize(&pt);
        if pt.iter().any(|v| !v.is_finite()) || k.iter().any(|v| !v.is_finite()) {
            return Err(TrfeError::NumericalConditioning(format!("Riccati blow-up at t = {t}")));
        }
        gains[t] = k;
        value[t] = pt;
    }
    Ok((value, gains))
}

/// Forward filter Riccati pass with Joseph-form updates; the measurement at
/// `t` is processed before `u_t` is chosen.
#[allow(clippy::type_complexity)]
pub fn kalman_forward<R: Real>(
    a: &[DMatrix<R>],
    h: &[DMatrix<R>],
    w: &[DMatrix<R>],
    sigma_v: &DMatrix<R>,
    x0_cov: &DMatrix<R>,
) -> Result<(Vec<DMatrix<R>>, Vec<DMatrix<R>>, Vec<DMatrix<R>>)> {
    let t_max = a.len();
    let n = x0_cov.nrows();
    let eye = DMatrix::<R>::identity(n, n);
    let mut prior = Vec::with_capacity(t_max + 1);
    let mut post = Vec::with_capacity(t_max);
    let mut gains = Vec::with_capacity(t_max);
    let mut sig = x0_cov.clone();
    for t in 0..t_max {
        let s = &h[t] * &sig * h[t].transpose() + sigma_v;
        let s_inv = linalg::spd_inverse(&linalg::symmetrize(&s))?;
        let l = &sig * h[t].transpose() * s_inv;
        let ikh = &eye - &l * &h[t];
        let sp = linalg::symmetrize(&(&ikh * &sig * ikh.transpose() + &l * sigma_v * l.transpose()));
        let next = linalg::symmetrize(&(&a[t] * &sp * a[t].transpose() + &w[t]));
        if next.iter().any(|v| !v.is_finite()) || linalg::max_abs(&next) > R::lit(1e12) {
            return Err(TrfeError::NumericalConditioning(format!("filter covariance blow-up at t = {t}")));
        }
        prior.push(sig);
        gains.push(l);
        post.push(sp);
        sig = next;
    }
    prior.push(sig);
    Ok((gains, prior, post))
}

/// Linearizes the system about the noise-free rollout of `u_ref` and solves
/// both Riccati recursions.
pub fn design_lqg<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>, u_ref: &[R]) -> Result<LqgDesign<R>> {
    let (n, m, nw, t_max) = (sys.state_dim(), sys.control_dim(), sys.noise_dim(), sys.horizon());
    if u_ref.len() != t_max * m {
        return Err(TrfeError::Precondition("reference input has wrong length".into()));
    }
    let zero_w = vec![R::zero(); t_max * nw];
    let x0 = sys.initial_state().mean().clone();
    let states = sys.simulate(x0.as_slice(), u_ref, &zero_w)?;
    let x_ref: Vec<DVector<R>> = (0..=t_max).map(|t| states.row(t).transpose()).collect();
    let u_blocks: Vec<DVector<R>> = (0..t_max)
        .map(|t| DVector::from_column_slice(&u_ref[t * m..(t + 1) * m]))
        .collect();
    let psd = |mat: DMatrix<R>| linalg::sym_fn(&(mat * R::lit(0.5)), |l| l.max(R::zero()));
    let (mut a, mut b, mut w) = (Vec::new(), Vec::new(), Vec::new());
    let mut r_lin = Vec::new();
    let zw = vec![R::zero(); nw];
    for t in 0..t_max {
        let (at, bt) = sys.step_jacobians(t, x_ref[t].as_slice(), u_blocks[t].as_slice(), &zw);
        let gt = sys.noise_jacobian(t, x_ref[t].as_slice(), u_blocks[t].as_slice(), &zw);
        w.push(linalg::symmetrize(&(&gt * sys.process_noise_cov() * gt.transpose())));
        a.push(at);
        b.push(bt);
        let rt = linalg::symmetrize(&(sys.control_cost_hessian(t, u_blocks[t].as_slice()) * R::lit(0.5)));
        linalg::check_spd(&rt, "linearized control weight")
            .map_err(|e| TrfeError::NumericalConditioning(e.to_string()))?;
        r_lin.push(rt);
    }
    let q_lin: Vec<DMatrix<R>> = (0..=t_max)
        .map(|t| psd(sys.state_cost_hessian(t, x_ref[t].as_slice())))
        .collect();
    let h: Vec<DMatrix<R>> = (0..=t_max)
        .map(|t| sys.observation_jacobian(t, x_ref[t].as_slice()))
        .collect();
    let (value, gains) = lqr_backward(&a, &b, &q_lin, &r_lin)?;
    let (filter_gains, prior_cov, posterior_cov) =
        kalman_forward(&a, &h, &w, sys.sensor_noise_cov(), &sys.initial_state().covariance())?;
    debug_assert_eq!(value.len(), t_max + 1);
    debug_assert_eq!(x_ref[0].len(), n);
    Ok(LqgDesign {
        x_ref,
        u_ref: u_blocks,
        a,
        b,
        h,
        q_lin,
        r_lin,
        w,
        gains,
        value,
        filter_gains,
        prior_cov,
        posterior_cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqgEvaluation<R> {
    pub j_lqg: R,
    pub std_error: R,
    pub n_eval: usize,
}

/// Simulates the certainty-equivalent controller `u_t = u_ref,t − K_t δx̂_{t|t}`
/// on the true dynamics with fresh noise, one ChaCha stream per episode.
pub fn lqg_baseline<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    design: &LqgDesign<R>,
    n_eval: usize,
    seed: u64,
) -> Result<LqgEvaluation<R>> {
    if n_eval == 0 {
        return Err(TrfeError::Precondition("n_eval must be positive".into()));
    }
    let costs: Vec<R> = (0..n_eval)
        .into_par_iter()
        .map(|e| lqg_episode(sys, design, seed, e as u64))
        .collect::<Result<_>>()?;
    let inv = R::one() / R::lit(n_eval as f64);
    Ok(LqgEvaluation {
        j_lqg: costs.iter().fold(R::zero(), |a, &c| a + c) * inv,
        std_error: stats::mean_std_error(&costs, false),
        n_eval,
    })
}

fn normal_vec<R: Real>(rng: &mut ChaCha8Rng, len: usize) -> DVector<R> {
    DVector::from_fn(len, |_, _| R::lit(rng.sample::<f64, _>(StandardNormal)))
}

fn lqg_episode<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    design: &LqgDesign<R>,
    seed: u64,
    episode: u64,
) -> Result<R> {
    let (n, m, p, nw, t_max) = (sys.state_dim(), sys.control_dim(), sys.obs_dim(), sys.noise_dim(), sys.horizon());
    let dyn_ = sys.dynamics();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    let chol_v = linalg::cholesky(sys.sensor_noise_cov())?;
    let chol_x0 = linalg::sym_sqrt(&sys.initial_state().covariance());
    let mut x: DVector<R> = sys.initial_state().mean() + chol_x0 * normal_vec::<R>(&mut rng, n);
    let mut dx_hat = DVector::<R>::zeros(n);
    let mut y = vec![R::zero(); p];
    let mut y_ref = vec![R::zero(); p];
    let mut next = vec![R::zero(); n];
    let mut cost = R::zero();
    for t in 0..t_max {
        dyn_.observe(t, x.as_slice(), &mut y);
        dyn_.observe(t, design.x_ref[t].as_slice(), &mut y_ref);
        let v = &chol_v * normal_vec::<R>(&mut rng, p);
        let innov = DVector::from_fn(p, |k, _| y[k] + v[k] - y_ref[k]) - &design.h[t] * &dx_hat;
        dx_hat += &design.filter_gains[t] * innov;
        let du = -(&design.gains[t] * &dx_hat);
        let u = &design.u_ref[t] + &du;
        let w = sys.process_noise_chol() * normal_vec::<R>(&mut rng, nw);
        cost += dyn_.state_cost(t, x.as_slice()) + dyn_.control_cost(t, u.as_slice());
        dyn_.step(t, x.as_slice(), u.as_slice(), w.as_slice(), &mut next);
        if next.iter().any(|v| !(v.abs() <= R::lit(crate::model::DIVERGENCE_LIMIT))) {
            return Err(TrfeError::DivergedRollout { step: t + 1, sample: Some(episode as usize) });
        }
        x.copy_from_slice(&next);
        dx_hat = &design.a[t] * &dx_hat + &design.b[t] * du;
        debug_assert_eq!(u.len(), m);
    }
    cost += dyn_.state_cost(t_max, x.as_slice());
    Ok(cost)
}

/// Exact finite-horizon output-feedback LQG optimum
/// `x̄₀ᵀP₀x̄₀ + tr(P₀Σ₀) + Σ_t [tr(P_{t+1}W) + tr(K_tᵀ(R + BᵀP_{t+1}B)K_t Σ_{t|t})]`.
pub fn lqg_analytic_cost<R: Real>(spec: &LinearSpec<R>) -> Result<R> {
    linalg::check_spd(&spec.sigma_v, "Σ_v")?;
    let t_max = spec.horizon;
    let a = vec![spec.a.clone(); t_max];
    let b = vec![spec.b.clone(); t_max];
    let q = vec![spec.q.clone(); t_max + 1];
    let r = vec![spec.r.clone(); t_max];
    let h = vec![spec.h.clone(); t_max + 1];
    let w = vec![spec.w.clone(); t_max];
    let (value, gains) = lqr_backward(&a, &b, &q, &r)?;
    let (_, _, post) = kalman_forward(&a, &h, &w, &spec.sigma_v, &spec.x0_cov)?;
    let x0 = &spec.x0_mean;
    let mut j = (x0.transpose() * &value[0] * x0)[(0, 0)] + (&value[0] * &spec.x0_cov).trace();
    for t in 0..t_max {
        let p1 = &value[t + 1];
        let k = &gains[t];
        let s = &spec.r + spec.b.transpose() * p1 * &spec.b;
        j += (p1 * &spec.w).trace() + (k.transpose() * s * k * &post[t]).trace();
    }
    Ok(j)
}

/// Deterministic LQ optimum of `Σ xᵀQx + Σ uᵀRu` from `x̄₀` with no noise:
/// the open-loop input sequence (stacked) and its cost.
pub fn lq_open_loop<R: Real>(spec: &LinearSpec<R>) -> Result<(Vec<R>, R)> {
    let t_max = spec.horizon;
    let a = vec![spec.a.clone(); t_max];
    let b = vec![spec.b.clone(); t_max];
    let q = vec![spec.q.clone(); t_max + 1];
    let r = vec![spec.r.clone(); t_max];
    let (value, gains) = lqr_backward(&a, &b, &q, &r)?;
    let mut x = spec.x0_mean.clone();
    let mut u = Vec::with_capacity(t_max * spec.b.ncols());
    for k in gains.iter() {
        let ut = -(k * &x);
        u.extend(ut.iter().copied());
        x = &spec.a * &x + &spec.b * ut;
    }
    let x0 = &spec.x0_mean;
    Ok((u, (x0.transpose() * &value[0] * x0)[(0, 0)]))
}
