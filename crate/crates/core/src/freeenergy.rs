//! Monte Carlo free energy of the state cost and the importance-weighted
//! fixed-point minimizer of `F_β(u) + J^u(u)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TrfeError};
use crate::model::{Dynamics, NoiseBank, SystemModel};
use crate::scalar::Real;

/// `F_β = −(1/β) log mean(exp(−β J^x))` with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergy<R> {
    pub value: R,
    pub std_error: R,
    pub ess: R,
    /// All weight sits on a single sample.
    pub degenerate: bool,
}

/// Free energy of a cost vector, treating samples as independent.
pub fn free_energy<R: Real>(costs: &[R], beta: R) -> Result<FreeEnergy<R>> {
    free_energy_impl(costs, beta, false)
}

/// As [`free_energy`], but the standard error treats consecutive samples as
/// antithetic pairs (see [`NoiseBank::new`]).
pub fn free_energy_paired<R: Real>(costs: &[R], beta: R) -> Result<FreeEnergy<R>> {
    free_energy_impl(costs, beta, true)
}

fn free_energy_impl<R: Real>(costs: &[R], beta: R, paired: bool) -> Result<FreeEnergy<R>> {
    if !(beta > R::zero()) || !beta.is_finite() {
        return Err(TrfeError::Domain(format!("beta must be positive and finite, got {beta}")));
    }
    if costs.is_empty() {
        return Err(TrfeError::Domain("empty cost vector".into()));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(TrfeError::Domain("non-finite cost".into()));
    }
    let cmin = costs.iter().copied().fold(R::infinity(), R::min);
    let e: Vec<R> = costs.iter().map(|&c| (-(beta * (c - cmin))).exp()).collect();
    let n = R::lit(costs.len() as f64);
    let sum = e.iter().fold(R::zero(), |a, &x| a + x);
    let sum2 = e.iter().fold(R::zero(), |a, &x| a + x * x);
    let z = sum / n;
    let value = cmin - z.ln() / beta;
    let se_z = crate::stats::mean_std_error(&e, paired);
    let ess = sum * sum / sum2;
    Ok(FreeEnergy {
        value,
        std_error: se_z / z / beta,
        ess,
        degenerate: ess <= R::one() + R::lit(1e-9) && costs.len() > 1,
    })
}

/// Normalized importance weights `w_i ∝ exp(−β J^x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedWeights<R> {
    /// Normalized log-weights.
    pub log_weights: Vec<R>,
    pub weights: Vec<R>,
    /// `1 / Σ w_i²`.
    pub ess: R,
}

impl<R: Real> TiltedWeights<R> {
    pub fn new(costs: &[R], beta: R) -> Result<Self> {
        if !(beta > R::zero()) {
            return Err(TrfeError::Domain(format!("beta must be positive, got {beta}")));
        }
        if costs.is_empty() || costs.iter().any(|c| !c.is_finite()) {
            return Err(TrfeError::Domain("costs must be finite and nonempty".into()));
        }
        let a: Vec<R> = costs.iter().map(|&c| -(beta * c)).collect();
        let lse = crate::stats::logsumexp(&a);
        let log_weights: Vec<R> = a.iter().map(|&x| x - lse).collect();
        let weights: Vec<R> = log_weights.iter().map(|&x| x.exp()).collect();
        let s2 = weights.iter().fold(R::zero(), |acc, &w| acc + w * w);
        Ok(Self {
            log_weights,
            weights,
            ess: R::one() / s2,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.ess <= R::one() + R::lit(1e-9) && self.weights.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltedStats<R: Real> {
    pub weights: TiltedWeights<R>,
    /// `Σ_i w_i ζ⁽ⁱ⁾`.
    pub mean_input: DVector<R>,
}

/// Tilted mean of the realized inputs (one row per sample).
pub fn tilted_stats<R: Real>(costs: &[R], realized_inputs: &DMatrix<R>, beta: R) -> Result<TiltedStats<R>> {
    if realized_inputs.nrows() != costs.len() {
        return Err(TrfeError::Precondition("one realized input row per cost is required".into()));
    }
    let weights = TiltedWeights::new(costs, beta)?;
    let w = DVector::from_column_slice(&weights.weights);
    let mean_input = realized_inputs.tr_mul(&w);
    Ok(TiltedStats { weights, mean_input })
}

/// Log-spaced grid of `k` inverse temperatures over `[lo, hi]`.
pub fn beta_grid<R: Real>(lo: R, hi: R, k: usize) -> Result<Vec<R>> {
    if !(lo > R::zero()) || !(hi >= lo) || k == 0 || !hi.is_finite() {
        return Err(TrfeError::Domain(format!("bad beta grid [{lo}, {hi}] with {k} points")));
    }
    if k == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let km1 = R::lit((k - 1) as f64);
    let mut g: Vec<R> = (0..k).map(|i| (a + (b - a) * R::lit(i as f64) / km1).exp()).collect();
    g[0] = lo;
    g[k - 1] = hi;
    Ok(g)
}

/// Controls for [`minimize_free_objective`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub max_iters: usize,
    /// Relative tolerance on the rescaled fixed-point residual, see
    /// [`minimize_free_objective`].
    pub tol_u: f64,
    pub max_halvings: usize,
    /// ESS floor is `max(ess_min, ess_fraction·N)`.
    pub ess_min: f64,
    pub ess_fraction: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol_u: 1e-4,
            max_halvings: 20,
            ess_min: 100.0,
            ess_fraction: 0.002,
        }
    }
}

impl FixedPointOptions {
    pub fn ess_threshold(&self, n: usize) -> f64 {
        self.ess_min.max(self.ess_fraction * n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult<R: Real> {
    pub beta: R,
    pub u_star: Vec<R>,
    /// `F_β(u*) + J^u(u*)`.
    pub f_star: R,
    pub std_error: R,
    pub iterations: usize,
    pub ess: R,
    pub converged: bool,
    /// `‖u* − (I + βΣ_W R)⁻¹ mean_input(u*)‖_∞`.
    pub residual: R,
}

impl<R: Real> FixedPointResult<R> {
    /// Converged and above the ESS floor.
    pub fn is_accepted(&self, opts: &FixedPointOptions, n: usize) -> bool {
        self.converged && self.ess.as_f64() >= opts.ess_threshold(n)
    }
}

struct Evaluation<R: Real> {
    costs: Vec<R>,
    objective: R,
    fe: FreeEnergy<R>,
}

fn evaluate<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    bank: &NoiseBank<R>,
    u: &[R],
    beta: R,
) -> Result<Evaluation<R>> {
    let costs = sys.batch_state_costs(u, bank)?;
    let fe = free_energy_impl(&costs, beta, bank.is_antithetic())?;
    let objective = fe.value + sys.control_cost_total(u)?;
    Ok(Evaluation { costs, objective, fe })
}

/// Fixed-point map `u ↦ (I + βΣ_W R_blk)⁻¹ E_μ[ζ]` evaluated from the costs at `u`.
fn fixed_point_map<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    bank: &NoiseBank<R>,
    u: &[R],
    costs: &[R],
    beta: R,
    block: &DMatrix<R>,
) -> Result<(Vec<R>, R)> {
    let weights = TiltedWeights::new(costs, beta)?;
    let (m, t_max, nw) = (sys.control_dim(), sys.horizon(), sys.noise_dim());
    let chol = sys.process_noise_chol();
    // E_μ[ζ] = u + chol · Σ_i w_i ξ⁽ⁱ⁾
    let mut xi_mean = vec![R::zero(); t_max * nw];
    for (i, &wi) in weights.weights.iter().enumerate() {
        if wi == R::zero() {
            continue;
        }
        for (acc, &x) in xi_mean.iter_mut().zip(bank.w_draws(i)) {
            *acc += wi * x;
        }
    }
    let mut out = vec![R::zero(); t_max * m];
    for t in 0..t_max {
        let mut mean_t = DVector::zeros(m);
        for r in 0..m {
            let mut acc = u[t * m + r];
            for c in 0..=r {
                acc += chol[(r, c)] * xi_mean[t * nw + c];
            }
            mean_t[r] = acc;
        }
        let next = block * mean_t;
        out[t * m..(t + 1) * m].copy_from_slice(next.as_slice());
    }
    Ok((out, weights.ess))
}

fn inf_norm<R: Real>(v: &[R]) -> R {
    v.iter().fold(R::zero(), |a, &x| a.max(x.abs()))
}

/// Applies the same `m×m` matrix to every time block of a stacked vector.
fn blockwise<R: Real>(mat: &DMatrix<R>, v: &[R]) -> Vec<R> {
    let m = mat.nrows();
    let mut out = vec![R::zero(); v.len()];
    for (o, x) in out.chunks_mut(m).zip(v.chunks(m)) {
        for r in 0..m {
            o[r] = (0..m).fold(R::zero(), |acc, c| acc + mat[(r, c)] * x[c]);
        }
    }
    out
}

/// Anderson (type II) extrapolation from iterates `u_j` and residuals `f_j = T(u_j) − u_j`.
fn anderson_candidate<R: Real>(us: &VecDeque<Vec<R>>, fs: &VecDeque<Vec<R>>) -> Option<Vec<R>> {
    let k = us.len();
    if k < 2 {
        return None;
    }
    let d = us[0].len();
    let (u_k, f_k) = (&us[k - 1], &fs[k - 1]);
    let df = DMatrix::from_fn(d, k - 1, |r, c| fs[c + 1][r] - fs[c][r]);
    let du = DMatrix::from_fn(d, k - 1, |r, c| us[c + 1][r] - us[c][r]);
    let rhs = DVector::from_column_slice(f_k);
    let svd = df.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(R::zero(), R::max);
    if !(smax > R::zero()) {
        return None;
    }
    let gamma = svd.solve(&rhs, smax * R::lit(1e-10)).ok()?;
    let corr = (du + df) * gamma;
    let cand: Vec<R> = (0..d).map(|r| u_k[r] + f_k[r] - corr[r]).collect();
    cand.iter().all(|v| v.is_finite()).then_some(cand)
}

/// Minimizes `F_β(u) + ½ Σ_t u_tᵀ R u_t` by the importance-weighted
/// fixed-point iteration `u ← (I + βΣ_W R)⁻¹ E_μ[ζ]`.
///
/// Iterates are Anderson-extrapolated. Progress is measured by the residual
/// `u − T(u)` rescaled by `I + (βΣ_w R)⁻¹`, which turns it into a
/// control-space gradient step and keeps the tolerance meaningful as `β → 0`.
/// An extrapolation that does not reduce this residual is discarded for the
/// plain map, whose step is halved while the residual would grow.
pub fn minimize_free_objective<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    bank: &NoiseBank<R>,
    beta: R,
    u_init: &[R],
    opts: &FixedPointOptions,
) -> Result<FixedPointResult<R>> {
    if !sys.is_matched_noise() {
        return Err(TrfeError::Precondition("fixed-point minimizer needs matched noise".into()));
    }
    if !(beta > R::zero()) || !beta.is_finite() {
        return Err(TrfeError::Domain(format!("beta must be positive and finite, got {beta}")));
    }
    let r = sys
        .control_weight()
        .ok_or_else(|| TrfeError::Precondition("fixed-point minimizer needs a quadratic control cost".into()))?;
    if u_init.len() != sys.input_len() {
        return Err(TrfeError::Precondition(format!("u_init must have length {}", sys.input_len())));
    }
    let m = sys.control_dim();
    let eye = DMatrix::<R>::identity(m, m);
    let sr = sys.process_noise_cov() * r * beta;
    let block = (&eye + &sr)
        .try_inverse()
        .ok_or_else(|| TrfeError::NumericalConditioning("I + βΣ_w R is singular".into()))?;
    let rescale = sr
        .clone()
        .try_inverse()
        .ok_or_else(|| TrfeError::NumericalConditioning("βΣ_w R is singular".into()))?
        + &eye;
    let tol = R::lit(opts.tol_u);

    let probe = |u: &[R]| -> Result<Probe<R>> {
        let eval = evaluate(sys, bank, u, beta)?;
        let (target, ess) = fixed_point_map(sys, bank, u, &eval.costs, beta, &block)?;
        let delta: Vec<R> = target.iter().zip(u).map(|(&a, &b)| a - b).collect();
        let g = blockwise(&rescale, &delta);
        let scaled = inf_norm(&g);
        let scaled_l2 = g.iter().fold(R::zero(), |a, &x| a + x * x).sqrt();
        Ok(Probe { eval, delta, scaled, scaled_l2, ess })
    };

    let mut u = u_init.to_vec();
    let mut cur = probe(&u)?;
    let mut us: VecDeque<Vec<R>> = VecDeque::new();
    let mut fs: VecDeque<Vec<R>> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        log::trace!("beta {beta}: iteration {iterations}, scaled residual {}", cur.scaled);
        if cur.scaled < tol * (R::one() + inf_norm(&u)) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;
        if us.len() > ANDERSON_MEMORY {
            us.pop_front();
            fs.pop_front();
        }
        us.push_back(u.clone());
        fs.push_back(cur.delta.clone());

        if let Some(cand) = anderson_candidate(&us, &fs) {
            match probe(&cand) {
                Ok(next) if next.scaled_l2 < cur.scaled_l2 => {
                    u = cand;
                    cur = next;
                    continue;
                }
                _ => {
                    us.clear();
                    fs.clear();
                    us.push_back(u.clone());
                    fs.push_back(cur.delta.clone());
                }
            }
        }
        let mut step = R::one();
        let mut moved = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<R> = u.iter().zip(&cur.delta).map(|(&a, &d)| a + step * d).collect();
            match probe(&trial) {
                Ok(next) if next.scaled_l2 <= cur.scaled_l2 || step == R::one() && next.eval.objective <= cur.eval.objective => {
                    u = trial;
                    cur = next;
                    moved = true;
                    break;
                }
                _ => step *= R::lit(0.5),
            }
        }
        if !moved {
            log::debug!("fixed point stalled at beta = {beta} after {iterations} iterations");
            break;
        }
        if step < R::one() {
            us.clear();
            fs.clear();
        }
    }
    Ok(FixedPointResult {
        beta,
        f_star: cur.eval.objective,
        std_error: cur.eval.fe.std_error,
        u_star: u,
        iterations,
        ess: cur.ess,
        converged,
        residual: inf_norm(&cur.delta),
    })
}

struct Probe<R: Real> {
    eval: Evaluation<R>,
    delta: Vec<R>,
    scaled: R,
    scaled_l2: R,
    ess: R,
}

const ANDERSON_MEMORY: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CurveEntry<R: Real> {
    pub beta: R,
    pub f_star: R,
    pub u_star: Vec<R>,
    pub ess: R,
    pub std_error: R,
    pub iterations: usize,
    pub converged: bool,
    pub accepted: bool,
}

/// Per-β minimized free objectives, `β` strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyCurve<R: Real> {
    pub entries: Vec<CurveEntry<R>>,
}

impl<R: Real> FreeEnergyCurve<R> {
    pub fn accepted(&self) -> impl Iterator<Item = &CurveEntry<R>> {
        self.entries.iter().filter(|e| e.accepted)
    }

    pub fn dropped(&self) -> usize {
        self.entries.iter().filter(|e| !e.accepted).count()
    }

    /// Builds a curve directly from `(β, F*)` pairs, all accepted.
    pub fn from_points(points: &[(R, R)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(points.len());
        for (k, &(beta, f)) in points.iter().enumerate() {
            if k > 0 && !(beta > points[k - 1].0) {
                return Err(TrfeError::Domain("betas must be strictly increasing".into()));
            }
            if !(beta > R::zero()) {
                return Err(TrfeError::Domain("betas must be positive".into()));
            }
            entries.push(CurveEntry {
                beta,
                f_star: f,
                u_star: Vec::new(),
                ess: R::infinity(),
                std_error: R::zero(),
                iterations: 0,
                converged: true,
                accepted: true,
            });
        }
        Ok(Self { entries })
    }
}

/// Sweeps the grid from small to large `β`, warm-starting each minimization
/// at the previous optimum.
pub fn free_energy_curve<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    bank: &NoiseBank<R>,
    betas: &[R],
    u_init: &[R],
    opts: &FixedPointOptions,
) -> Result<FreeEnergyCurve<R>> {
    if betas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(TrfeError::Domain("betas must be strictly increasing".into()));
    }
    let mut u = u_init.to_vec();
    let mut entries = Vec::with_capacity(betas.len());
    for &beta in betas {
        let res = minimize_free_objective(sys, bank, beta, &u, opts)?;
        let accepted = res.is_accepted(opts, bank.len());
        log::debug!(
            "beta {:.4e}: F* = {:.6}, ess = {:.0}, iters = {}, accepted = {accepted}",
            beta.as_f64(),
            res.f_star.as_f64(),
            res.ess.as_f64(),
            res.iterations
        );
        u.clone_from(&res.u_star);
        entries.push(CurveEntry {
            beta,
            f_star: res.f_star,
            u_star: res.u_star,
            ess: res.ess,
            std_error: res.std_error,
            iterations: res.iterations,
            converged: res.converged,
            accepted,
        });
    }
    Ok(FreeEnergyCurve { entries })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GvpCheck<R> {
    /// `F_β[q] − KL(p‖q)/β`.
    pub lhs: R,
    /// `E_p[ℓ]`.
    pub rhs: R,
    pub gap: R,
}

/// Evaluates both sides of `E_p[ℓ] ≥ F_β[q] − KL(p‖q)/β` on a finite alphabet.
pub fn gvp_check<R: Real>(p: &[R], q: &[R], losses: &[R], beta: R) -> Result<GvpCheck<R>> {
    if p.len() != q.len() || p.len() != losses.len() || p.is_empty() {
        return Err(TrfeError::Domain("p, q and losses must have equal nonzero length".into()));
    }
    if !(beta > R::zero()) {
        return Err(TrfeError::Domain("beta must be positive".into()));
    }
    for d in [p, q] {
        let s = d.iter().fold(R::zero(), |a, &x| a + x);
        if d.iter().any(|&x| !(x >= R::zero())) || (s - R::one()).abs() > R::lit(1e-9) {
            return Err(TrfeError::Domain("p and q must be probability vectors".into()));
        }
    }
    let mut kl = R::zero();
    let mut rhs = R::zero();
    for i in 0..p.len() {
        if p[i] > R::zero() {
            if q[i] == R::zero() {
                return Err(TrfeError::AbsoluteContinuity { atom: i });
            }
            kl += p[i] * (p[i] / q[i]).ln();
            rhs += p[i] * losses[i];
        }
    }
    let a: Vec<R> = (0..q.len())
        .filter(|&i| q[i] > R::zero())
        .map(|i| q[i].ln() - beta * losses[i])
        .collect();
    let f_q = -crate::stats::logsumexp(&a) / beta;
    let lhs = f_q - kl / beta;
    Ok(GvpCheck { lhs, rhs, gap: rhs - lhs })
}
