//! System tuple, noise bank and rollouts.
//!
//! A system is a [`Dynamics`] implementation (written once, generically over
//! [`Scalar`], so plain rollouts and forward-mode differentiation share code)
//! plus the noise covariances and optional structural metadata that the
//! certificates and the fixed-point minimizer rely on.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::autodiff::{Dual, HyperDual};
use crate::error::{Result, TrfeError};
use crate::linalg;
use crate::scalar::{Real, Scalar};

/// Any state component beyond this magnitude aborts a rollout.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Discrete-time model `x_{t+1} = f_t(x_t, u_t, w_t)`, `y_t = h_t(x_t) + v_t`.
///
/// Costs are `q_t(x)` for `t = 0..=T` and `r_t(u)` for `t = 0..T`.
pub trait Dynamics<R: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Dimension of `w_t`. Equals the control dimension for matched noise.
    fn noise_dim(&self) -> usize {
        self.control_dim()
    }
    fn obs_dim(&self) -> usize;
    fn horizon(&self) -> usize;

    fn step<S: Scalar<Real = R>>(&self, t: usize, x: &[S], u: &[S], w: &[S], next: &mut [S]);
    /// Noise-free sensor map `h_t(x)`.
    fn observe<S: Scalar<Real = R>>(&self, t: usize, x: &[S], y: &mut [S]);
    fn state_cost<S: Scalar<Real = R>>(&self, t: usize, x: &[S]) -> S;
    fn control_cost<S: Scalar<Real = R>>(&self, t: usize, u: &[S]) -> S;

    /// Coordinates in which the state cost is coercive; tracking tasks
    /// override this with the deviation from the reference.
    fn cost_coordinates(&self, _t: usize, x: &[R]) -> Vec<R> {
        x.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState<R: Real> {
    Fixed(DVector<R>),
    Gaussian { mean: DVector<R>, cov: DMatrix<R> },
}

impl<R: Real> InitialState<R> {
    pub fn mean(&self) -> &DVector<R> {
        match self {
            InitialState::Fixed(m) | InitialState::Gaussian { mean: m, .. } => m,
        }
    }

    /// Zero for a fixed initial state.
    pub fn covariance(&self) -> DMatrix<R> {
        match self {
            InitialState::Fixed(m) => DMatrix::zeros(m.len(), m.len()),
            InitialState::Gaussian { cov, .. } => cov.clone(),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, InitialState::Fixed(_))
    }
}

/// Assumption-style coercivity `q_t(x) ≥ a‖x‖² − b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityParams<R> {
    pub a: R,
    pub b: R,
}

impl<R: Real> CoercivityParams<R> {
    pub fn new(a: R, b: R) -> Result<Self> {
        if !(a > R::zero()) || !(b >= R::zero()) {
            return Err(TrfeError::InvalidModel(format!(
                "coercivity needs a > 0 and b >= 0, got a = {a}, b = {b}"
            )));
        }
        Ok(Self { a, b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown<R> {
    pub state_cost: R,
    pub control_cost: R,
    pub total: R,
}

/// Frozen standard-normal draws `ξ⁽ⁱ⁾ = (x₀⁽ⁱ⁾, w₀⁽ⁱ⁾, …, w_{T−1}⁽ⁱ⁾)`.
///
/// The default constructor draws antithetic pairs `(ξ, −ξ)`, so the sample
/// mean of every noise coordinate is exactly zero, and then moment-matches
/// the bank so the sample second moment is exactly `I`. Linear and quadratic
/// functionals of the noise are then integrated without Monte Carlo error.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank<R> {
    seed: u64,
    n_samples: usize,
    horizon: usize,
    state_dim: usize,
    noise_dim: usize,
    antithetic: bool,
    draws: Vec<R>,
}

impl<R: Real> NoiseBank<R> {
    pub fn new(seed: u64, n_samples: usize, horizon: usize, state_dim: usize, noise_dim: usize) -> Self {
        Self::generate(seed, n_samples, horizon, state_dim, noise_dim, true)
    }

    /// Plain i.i.d. draws with no antithetic pairing.
    pub fn independent(
        seed: u64,
        n_samples: usize,
        horizon: usize,
        state_dim: usize,
        noise_dim: usize,
    ) -> Self {
        Self::generate(seed, n_samples, horizon, state_dim, noise_dim, false)
    }

    pub fn for_system<D: Dynamics<R>>(sys: &SystemModel<R, D>, seed: u64, n_samples: usize) -> Self {
        let d = &sys.dynamics;
        Self::new(seed, n_samples, d.horizon(), d.state_dim(), d.noise_dim())
    }

    fn generate(
        seed: u64,
        n_samples: usize,
        horizon: usize,
        state_dim: usize,
        noise_dim: usize,
        antithetic: bool,
    ) -> Self {
        let stride = state_dim + horizon * noise_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draws = vec![R::zero(); n_samples * stride];
        let mut i = 0;
        while i < n_samples {
            let base = i * stride;
            for k in 0..stride {
                let z: f64 = rng.sample(StandardNormal);
                draws[base + k] = R::lit(z);
            }
            if antithetic && i + 1 < n_samples {
                for k in 0..stride {
                    draws[base + stride + k] = -draws[base + k];
                }
                i += 2;
            } else {
                i += 1;
            }
        }
        if antithetic {
            whiten(&mut draws, n_samples, stride);
        }
        Self {
            seed,
            n_samples,
            horizon,
            state_dim,
            noise_dim,
            antithetic,
            draws,
        }
    }

    pub fn len(&self) -> usize {
        self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn is_antithetic(&self) -> bool {
        self.antithetic
    }

    fn stride(&self) -> usize {
        self.state_dim + self.horizon * self.noise_dim
    }

    /// The first `n` samples as a bank of their own.
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.n_samples);
        Self {
            n_samples: n,
            draws: self.draws[..n * self.stride()].to_vec(),
            ..*self
        }
    }

    /// Standard-normal draw for the initial state of sample `i`.
    pub fn x0_draw(&self, i: usize) -> &[R] {
        let b = i * self.stride();
        &self.draws[b..b + self.state_dim]
    }

    /// Standard-normal process-noise draws of sample `i`, stacked over time.
    pub fn w_draws(&self, i: usize) -> &[R] {
        let b = i * self.stride() + self.state_dim;
        &self.draws[b..b + self.horizon * self.noise_dim]
    }
}

/// Rescales the draws so their sample second moment is exactly the identity
/// (`ξ ← L⁻¹ξ` with `LLᵀ = N⁻¹Σ ξξᵀ`). Skipped when there are too few samples
/// for a full-rank moment matrix.
fn whiten<R: Real>(draws: &mut [R], n_samples: usize, stride: usize) {
    if stride == 0 || n_samples < 4 * stride {
        return;
    }
    let mat = DMatrix::from_column_slice(stride, n_samples, draws);
    let moment = (&mat * mat.transpose()) / R::lit(n_samples as f64);
    let Some(chol) = moment.cholesky() else {
        return;
    };
    let white = chol.l().solve_lower_triangular(&mat).expect("Cholesky factor is nonsingular");
    draws.copy_from_slice(white.as_slice());
}

/// `(f, h, q, r, Σ_w, Σ_v, x₀)` together with structural metadata.
#[derive(Debug, Clone)]
pub struct SystemModel<R: Real, D> {
    dynamics: D,
    process_noise_cov: DMatrix<R>,
    process_noise_chol: DMatrix<R>,
    sensor_noise_cov: DMatrix<R>,
    initial_state: InitialState<R>,
    initial_chol: DMatrix<R>,
    matched_noise: bool,
    control_weight: Option<DMatrix<R>>,
    sensor_matrix: Option<DMatrix<R>>,
    state_weight: Option<DMatrix<R>>,
    sensor_lipschitz: Option<R>,
    coercivity: Option<CoercivityParams<R>>,
}

/// Collects the pieces of a [`SystemModel`]; [`SystemBuilder::build`] validates them.
pub struct SystemBuilder<R: Real, D> {
    dynamics: D,
    process_noise_cov: Option<DMatrix<R>>,
    sensor_noise_cov: Option<DMatrix<R>>,
    initial_state: Option<InitialState<R>>,
    matched_noise: bool,
    control_weight: Option<DMatrix<R>>,
    sensor_matrix: Option<DMatrix<R>>,
    state_weight: Option<DMatrix<R>>,
    sensor_lipschitz: Option<R>,
    coercivity: Option<CoercivityParams<R>>,
}

impl<R: Real, D: Dynamics<R>> SystemBuilder<R, D> {
    pub fn process_noise(mut self, cov: DMatrix<R>) -> Self {
        self.process_noise_cov = Some(cov);
        self
    }

    pub fn sensor_noise(mut self, cov: DMatrix<R>) -> Self {
        self.sensor_noise_cov = Some(cov);
        self
    }

    pub fn initial_state(mut self, x0: InitialState<R>) -> Self {
        self.initial_state = Some(x0);
        self
    }

    /// Declares that `f` sees control and noise only through `u + w`.
    pub fn matched_noise(mut self, matched: bool) -> Self {
        self.matched_noise = matched;
        self
    }

    /// Declares `r_t(u) = ½ uᵀ R u`.
    pub fn quadratic_control(mut self, r: DMatrix<R>) -> Self {
        self.control_weight = Some(r);
        self
    }

    /// Declares `h_t(x) = H x` (in cost coordinates for tracking tasks).
    pub fn linear_sensor(mut self, h: DMatrix<R>) -> Self {
        self.sensor_matrix = Some(h);
        self
    }

    /// Quadratic weight `Q` with `q_t(x) ≥ zᵀ Q z` in cost coordinates `z`.
    pub fn state_weight(mut self, q: DMatrix<R>) -> Self {
        self.state_weight = Some(q);
        self
    }

    pub fn sensor_lipschitz(mut self, l: R) -> Self {
        self.sensor_lipschitz = Some(l);
        self
    }

    pub fn coercivity(mut self, c: CoercivityParams<R>) -> Self {
        self.coercivity = Some(c);
        self
    }

    pub fn build(self) -> Result<SystemModel<R, D>> {
        let d = &self.dynamics;
        let (n, m, p, nw) = (d.state_dim(), d.control_dim(), d.obs_dim(), d.noise_dim());
        if n == 0 || m == 0 || p == 0 || d.horizon() == 0 {
            return Err(TrfeError::InvalidModel("dimensions and horizon must be positive".into()));
        }
        let sw = self
            .process_noise_cov
            .ok_or_else(|| TrfeError::InvalidModel("process noise covariance missing".into()))?;
        let sv = self
            .sensor_noise_cov
            .ok_or_else(|| TrfeError::InvalidModel("sensor noise covariance missing".into()))?;
        let x0 = self
            .initial_state
            .ok_or_else(|| TrfeError::InvalidModel("initial state missing".into()))?;
        if sw.nrows() != nw {
            return Err(TrfeError::InvalidModel(format!("Σ_w must be {nw}×{nw}")));
        }
        if sv.nrows() != p {
            return Err(TrfeError::InvalidModel(format!("Σ_v must be {p}×{p}")));
        }
        linalg::check_spd(&sw, "Σ_w")?;
        linalg::check_spd(&sv, "Σ_v")?;
        if x0.mean().len() != n {
            return Err(TrfeError::InvalidModel(format!("x₀ must have length {n}")));
        }
        let initial_chol = match &x0 {
            InitialState::Fixed(_) => DMatrix::zeros(n, n),
            InitialState::Gaussian { cov, .. } => {
                linalg::check_spd(cov, "x₀ covariance")?;
                linalg::cholesky(cov)?
            }
        };
        if self.matched_noise && nw != m {
            return Err(TrfeError::InvalidModel("matched noise needs noise_dim = control_dim".into()));
        }
        if let Some(r) = &self.control_weight {
            if r.nrows() != m {
                return Err(TrfeError::InvalidModel(format!("R must be {m}×{m}")));
            }
            linalg::check_spd(r, "R")?;
        }
        if let Some(l) = self.sensor_lipschitz {
            if !(l > R::zero()) {
                return Err(TrfeError::InvalidModel("sensor Lipschitz constant must be positive".into()));
            }
        }
        let sys = SystemModel {
            process_noise_chol: linalg::cholesky(&sw)?,
            dynamics: self.dynamics,
            process_noise_cov: sw,
            sensor_noise_cov: sv,
            initial_state: x0,
            initial_chol,
            matched_noise: self.matched_noise,
            control_weight: self.control_weight,
            sensor_matrix: self.sensor_matrix,
            state_weight: self.state_weight,
            sensor_lipschitz: self.sensor_lipschitz,
            coercivity: self.coercivity,
        };
        if sys.matched_noise {
            let gap = sys.matched_noise_probe(100, 0x6d61_7463_6865_6421);
            if gap > R::lit(1e3) * R::default_epsilon() {
                return Err(TrfeError::InvalidModel(format!(
                    "declared matched noise but f(x,u,w) ≠ f(x,u+w,0) (gap {gap})"
                )));
            }
        }
        if let Some(r) = &sys.control_weight {
            sys.check_quadratic_control(r)?;
        }
        Ok(sys)
    }
}

impl<R: Real, D: Dynamics<R>> SystemModel<R, D> {
    pub fn builder(dynamics: D) -> SystemBuilder<R, D> {
        SystemBuilder {
            dynamics,
            process_noise_cov: None,
            sensor_noise_cov: None,
            initial_state: None,
            matched_noise: false,
            control_weight: None,
            sensor_matrix: None,
            state_weight: None,
            sensor_lipschitz: None,
            coercivity: None,
        }
    }

    pub fn dynamics(&self) -> &D {
        &self.dynamics
    }
    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }
    pub fn control_dim(&self) -> usize {
        self.dynamics.control_dim()
    }
    pub fn noise_dim(&self) -> usize {
        self.dynamics.noise_dim()
    }
    pub fn obs_dim(&self) -> usize {
        self.dynamics.obs_dim()
    }
    pub fn horizon(&self) -> usize {
        self.dynamics.horizon()
    }
    /// Length `T·m` of a stacked control sequence.
    pub fn input_len(&self) -> usize {
        self.horizon() * self.control_dim()
    }
    pub fn process_noise_cov(&self) -> &DMatrix<R> {
        &self.process_noise_cov
    }
    pub fn process_noise_chol(&self) -> &DMatrix<R> {
        &self.process_noise_chol
    }
    pub fn sensor_noise_cov(&self) -> &DMatrix<R> {
        &self.sensor_noise_cov
    }
    pub fn initial_state(&self) -> &InitialState<R> {
        &self.initial_state
    }
    pub fn is_matched_noise(&self) -> bool {
        self.matched_noise
    }
    pub fn control_weight(&self) -> Option<&DMatrix<R>> {
        self.control_weight.as_ref()
    }
    pub fn sensor_matrix(&self) -> Option<&DMatrix<R>> {
        self.sensor_matrix.as_ref()
    }
    pub fn state_weight(&self) -> Option<&DMatrix<R>> {
        self.state_weight.as_ref()
    }
    pub fn coercivity(&self) -> Option<CoercivityParams<R>> {
        self.coercivity
    }

    /// Declared Lipschitz constant, else the spectral norm of a linear sensor.
    pub fn sensor_lipschitz(&self) -> Option<R> {
        self.sensor_lipschitz.or_else(|| {
            self.sensor_matrix.as_ref().map(|h| {
                let g = h.transpose() * h;
                linalg::sym_eigenvalues(&g).max().max(R::zero()).sqrt()
            })
        })
    }

    /// Largest relative gap `‖f(x,u,w) − f(x,u+w,0)‖_∞ / (1 + ‖f‖)` over random probes.
    pub fn matched_noise_probe(&self, probes: usize, seed: u64) -> R {
        let d = &self.dynamics;
        let (n, m, t_max) = (d.state_dim(), d.control_dim(), d.horizon());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gap = R::zero();
        let mut a = vec![R::zero(); n];
        let mut b = vec![R::zero(); n];
        for _ in 0..probes {
            let t = rng.random_range(0..t_max);
            let x: Vec<R> = (0..n).map(|_| R::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            let u: Vec<R> = (0..m).map(|_| R::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            let w: Vec<R> = (0..m).map(|_| R::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            let uw: Vec<R> = u.iter().zip(&w).map(|(&p, &q)| p + q).collect();
            let zero = vec![R::zero(); m];
            d.step(t, &x, &u, &w, &mut a);
            d.step(t, &x, &uw, &zero, &mut b);
            for (p, q) in a.iter().zip(&b) {
                // relative to the magnitude, so reassociating u + w is not a gap
                let diff = (*p - *q).abs() / (R::one() + p.abs().max(q.abs()));
                if !(diff <= gap) {
                    gap = if diff.is_finite() { diff } else { R::infinity() };
                }
            }
        }
        gap
    }

    fn check_quadratic_control(&self, r: &DMatrix<R>) -> Result<()> {
        let m = self.control_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let t = rng.random_range(0..self.horizon());
            let u = DVector::from_fn(m, |_, _| R::lit(rng.sample::<f64, _>(StandardNormal)));
            let expected = (u.transpose() * r * &u)[(0, 0)] * R::lit(0.5);
            let got = self.dynamics.control_cost(t, u.as_slice());
            if (got - expected).abs() > R::lit(1e-9) * (R::one() + expected.abs()) {
                return Err(TrfeError::InvalidModel(format!(
                    "declared r(u) = ½uᵀRu but r = {got} vs {expected}"
                )));
            }
        }
        Ok(())
    }

    /// Process noise `w_t = chol(Σ_w) ξ_t` for sample `i`, stacked over time.
    pub fn scaled_noise(&self, bank: &NoiseBank<R>, i: usize) -> Vec<R> {
        let nw = self.noise_dim();
        let l = &self.process_noise_chol;
        let xi = bank.w_draws(i);
        let mut out = vec![R::zero(); xi.len()];
        for t in 0..self.horizon() {
            for r in 0..nw {
                let mut acc = R::zero();
                for c in 0..=r {
                    acc += l[(r, c)] * xi[t * nw + c];
                }
                out[t * nw + r] = acc;
            }
        }
        out
    }

    fn initial_for(&self, bank: &NoiseBank<R>, i: usize) -> Vec<R> {
        match &self.initial_state {
            InitialState::Fixed(x0) => x0.as_slice().to_vec(),
            InitialState::Gaussian { mean, .. } => {
                let xi = DVector::from_column_slice(bank.x0_draw(i));
                (mean + &self.initial_chol * xi).as_slice().to_vec()
            }
        }
    }

    fn check_bank(&self, bank: &NoiseBank<R>, i: usize) -> Result<()> {
        if bank.horizon() != self.horizon() || bank.noise_dim() != self.noise_dim() {
            return Err(TrfeError::Precondition("noise bank shape does not match the system".into()));
        }
        if i >= bank.len() {
            return Err(TrfeError::Precondition(format!(
                "sample index {i} out of range for bank of {}",
                bank.len()
            )));
        }
        Ok(())
    }

    fn check_controls(&self, u: &[R]) -> Result<()> {
        if u.len() != self.input_len() {
            return Err(TrfeError::Precondition(format!(
                "control sequence must have length {}",
                self.input_len()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(TrfeError::Precondition("control sequence is not finite".into()));
        }
        Ok(())
    }

    /// Rolls `x_{t+1} = f(x_t, u_t, w_t)` from an explicit initial state and noise.
    ///
    /// Returns the `(T+1)×n` state sequence.
    pub fn simulate(&self, x0: &[R], u: &[R], w: &[R]) -> Result<DMatrix<R>> {
        let (n, m, nw, t_max) = (self.state_dim(), self.control_dim(), self.noise_dim(), self.horizon());
        let mut states = DMatrix::zeros(t_max + 1, n);
        let mut x = x0.to_vec();
        let mut next = vec![R::zero(); n];
        guard(&x, 0)?;
        for (k, v) in x.iter().enumerate() {
            states[(0, k)] = *v;
        }
        for t in 0..t_max {
            self.dynamics
                .step(t, &x, &u[t * m..(t + 1) * m], &w[t * nw..(t + 1) * nw], &mut next);
            guard(&next, t + 1)?;
            std::mem::swap(&mut x, &mut next);
            for (k, v) in x.iter().enumerate() {
                states[(t + 1, k)] = *v;
            }
        }
        Ok(states)
    }

    /// State sequence of sample `i` under the stacked controls `u`.
    pub fn rollout(&self, u: &[R], bank: &NoiseBank<R>, i: usize) -> Result<DMatrix<R>> {
        self.check_controls(u)?;
        self.check_bank(bank, i)?;
        let x0 = self.initial_for(bank, i);
        let w = self.scaled_noise(bank, i);
        self.simulate(&x0, u, &w).map_err(|e| e.with_sample(i))
    }

    /// `J^x = Σ_{t=0}^{T} q_t(x_t)`, `J^u = Σ_{t=0}^{T−1} r_t(u_t)`.
    pub fn trajectory_cost(&self, states: &DMatrix<R>, u: &[R]) -> Result<CostBreakdown<R>> {
        let (n, t_max) = (self.state_dim(), self.horizon());
        if states.nrows() != t_max + 1 || states.ncols() != n {
            return Err(TrfeError::Precondition(format!("states must be {}×{n}", t_max + 1)));
        }
        self.check_controls(u)?;
        let mut jx = R::zero();
        let mut x = vec![R::zero(); n];
        for t in 0..=t_max {
            for k in 0..n {
                x[k] = states[(t, k)];
            }
            jx += checked_cost(self.dynamics.state_cost(t, &x), "q", t)?;
        }
        let ju = self.control_cost_total(u)?;
        Ok(CostBreakdown {
            state_cost: jx,
            control_cost: ju,
            total: jx + ju,
        })
    }

    pub fn control_cost_total(&self, u: &[R]) -> Result<R> {
        let m = self.control_dim();
        let mut ju = R::zero();
        for t in 0..self.horizon() {
            ju += checked_cost(self.dynamics.control_cost(t, &u[t * m..(t + 1) * m]), "r", t)?;
        }
        Ok(ju)
    }

    /// Fused rollout + state cost for sample `i`, without storing states.
    pub fn sample_state_cost(&self, u: &[R], bank: &NoiseBank<R>, i: usize) -> Result<R> {
        let x0 = self.initial_for(bank, i);
        let w = self.scaled_noise(bank, i);
        self.state_cost_along(&x0, u, &w).map_err(|e| e.with_sample(i))
    }

    fn state_cost_along(&self, x0: &[R], u: &[R], w: &[R]) -> Result<R> {
        let (n, m, nw, t_max) = (self.state_dim(), self.control_dim(), self.noise_dim(), self.horizon());
        let mut x = x0.to_vec();
        let mut next = vec![R::zero(); n];
        guard(&x, 0)?;
        let mut jx = checked_cost(self.dynamics.state_cost(0, &x), "q", 0)?;
        for t in 0..t_max {
            self.dynamics
                .step(t, &x, &u[t * m..(t + 1) * m], &w[t * nw..(t + 1) * nw], &mut next);
            guard(&next, t + 1)?;
            std::mem::swap(&mut x, &mut next);
            jx += checked_cost(self.dynamics.state_cost(t + 1, &x), "q", t + 1)?;
        }
        Ok(jx)
    }

    /// `J^x` of every bank sample, computed in parallel and collected in index order.
    pub fn batch_state_costs(&self, u: &[R], bank: &NoiseBank<R>) -> Result<Vec<R>> {
        self.check_batch(u, bank)?;
        (0..bank.len())
            .into_par_iter()
            .map(|i| self.sample_state_cost(u, bank, i))
            .collect()
    }

    /// Serial reference for [`Self::batch_state_costs`].
    pub fn batch_state_costs_serial(&self, u: &[R], bank: &NoiseBank<R>) -> Result<Vec<R>> {
        self.check_batch(u, bank)?;
        (0..bank.len()).map(|i| self.sample_state_cost(u, bank, i)).collect()
    }

    fn check_batch(&self, u: &[R], bank: &NoiseBank<R>) -> Result<()> {
        if bank.is_empty() {
            return Err(TrfeError::Precondition("noise bank is empty".into()));
        }
        self.check_controls(u)?;
        self.check_bank(bank, 0)
    }

    /// Realized inputs `ζ⁽ⁱ⁾ = u + w⁽ⁱ⁾`, one row per sample (`N × T·m`).
    pub fn realized_inputs(&self, u: &[R], bank: &NoiseBank<R>) -> Result<DMatrix<R>> {
        if !self.matched_noise {
            return Err(TrfeError::Precondition("realized inputs need matched noise".into()));
        }
        self.check_batch(u, bank)?;
        let len = self.input_len();
        let mut z = DMatrix::zeros(bank.len(), len);
        for i in 0..bank.len() {
            let w = self.scaled_noise(bank, i);
            for k in 0..len {
                z[(i, k)] = u[k] + w[k];
            }
        }
        Ok(z)
    }

    /// Deterministic state cost `S(ζ) = Σ_t q_t(x_t(ζ))` with `w ≡ 0`, from the mean initial state.
    pub fn realized_cost<S: Scalar<Real = R>>(&self, zeta: &[S], from_step: usize, x_from: &[S]) -> Result<S> {
        let (n, m, t_max) = (self.state_dim(), self.control_dim(), self.horizon());
        let zero_w = vec![S::zero(); self.noise_dim()];
        let mut x = x_from.to_vec();
        let mut next = vec![S::zero(); n];
        let mut acc = self.dynamics.state_cost(from_step, &x);
        for t in from_step..t_max {
            self.dynamics.step(t, &x, &zeta[t * m..(t + 1) * m], &zero_w, &mut next);
            std::mem::swap(&mut x, &mut next);
            if x.iter().any(|v| !(v.value().abs() <= R::lit(DIVERGENCE_LIMIT))) {
                return Err(TrfeError::DivergedRollout { step: t + 1, sample: None });
            }
            acc += self.dynamics.state_cost(t + 1, &x);
        }
        Ok(acc)
    }

    /// Jacobians `(∂f/∂x, ∂f/∂u)` at `(t, x, u, w)` by forward-mode differentiation.
    pub fn step_jacobians(&self, t: usize, x: &[R], u: &[R], w: &[R]) -> (DMatrix<R>, DMatrix<R>) {
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, m);
        let wd: Vec<Dual<R>> = w.iter().map(|&v| Dual::constant(v)).collect();
        let mut next = vec![Dual::constant(R::zero()); n];
        for j in 0..n + m {
            let xd: Vec<Dual<R>> = x
                .iter()
                .enumerate()
                .map(|(k, &v)| if k == j { Dual::variable(v) } else { Dual::constant(v) })
                .collect();
            let ud: Vec<Dual<R>> = u
                .iter()
                .enumerate()
                .map(|(k, &v)| if n + k == j { Dual::variable(v) } else { Dual::constant(v) })
                .collect();
            self.dynamics.step(t, &xd, &ud, &wd, &mut next);
            for r in 0..n {
                if j < n {
                    a[(r, j)] = next[r].eps;
                } else {
                    b[(r, j - n)] = next[r].eps;
                }
            }
        }
        (a, b)
    }

    /// Noise Jacobian `∂f/∂w` at `(t, x, u, w)`.
    pub fn noise_jacobian(&self, t: usize, x: &[R], u: &[R], w: &[R]) -> DMatrix<R> {
        let (n, nw) = (self.state_dim(), self.noise_dim());
        let xd: Vec<Dual<R>> = x.iter().map(|&v| Dual::constant(v)).collect();
        let ud: Vec<Dual<R>> = u.iter().map(|&v| Dual::constant(v)).collect();
        let mut next = vec![Dual::constant(R::zero()); n];
        let mut g = DMatrix::zeros(n, nw);
        for j in 0..nw {
            self.dynamics.step(t, &xd, &ud, &seed_dual(w, j), &mut next);
            for r in 0..n {
                g[(r, j)] = next[r].eps;
            }
        }
        g
    }

    /// Jacobian of the noise-free sensor map at `x`.
    pub fn observation_jacobian(&self, t: usize, x: &[R]) -> DMatrix<R> {
        let (n, p) = (self.state_dim(), self.obs_dim());
        let mut h = DMatrix::zeros(p, n);
        let mut y = vec![Dual::constant(R::zero()); p];
        for j in 0..n {
            let xd: Vec<Dual<R>> = seed_dual(x, j);
            self.dynamics.observe(t, &xd, &mut y);
            for r in 0..p {
                h[(r, j)] = y[r].eps;
            }
        }
        h
    }

    pub fn state_cost_gradient(&self, t: usize, x: &[R]) -> DVector<R> {
        DVector::from_fn(x.len(), |j, _| self.dynamics.state_cost(t, &seed_dual(x, j)).eps)
    }

    pub fn control_cost_gradient(&self, t: usize, u: &[R]) -> DVector<R> {
        DVector::from_fn(u.len(), |j, _| self.dynamics.control_cost(t, &seed_dual(u, j)).eps)
    }

    pub fn state_cost_hessian(&self, t: usize, x: &[R]) -> DMatrix<R> {
        hessian_of(x, |v| self.dynamics.state_cost(t, v))
    }

    pub fn control_cost_hessian(&self, t: usize, u: &[R]) -> DMatrix<R> {
        hessian_of(u, |v| self.dynamics.control_cost(t, v))
    }

    /// Checks `q_t(x) − a‖z‖² + b ≥ −10⁻⁹` on states drawn from bank rollouts,
    /// `z` being the system's cost coordinates. Returns the smallest margin.
    pub fn coercivity_audit(
        &self,
        params: CoercivityParams<R>,
        u: &[R],
        bank: &NoiseBank<R>,
        n_states: usize,
    ) -> Result<R> {
        let t_max = self.horizon();
        let mut worst = R::infinity();
        let mut checked = 0usize;
        let mut i = 0usize;
        while checked < n_states && i < bank.len() {
            let states = self.rollout(u, bank, i)?;
            for t in 0..=t_max {
                if checked >= n_states {
                    break;
                }
                let x: Vec<R> = states.row(t).iter().copied().collect();
                let z = self.dynamics.cost_coordinates(t, &x);
                let norm2 = z.iter().fold(R::zero(), |acc, v| acc + *v * *v);
                let margin = self.dynamics.state_cost(t, &x) - params.a * norm2 + params.b;
                worst = worst.min(margin);
                checked += 1;
            }
            i += 1;
        }
        if worst < R::lit(-1e-9) {
            return Err(TrfeError::ModelContract(format!(
                "coercivity q ≥ a‖x‖² − b violated by {worst}"
            )));
        }
        Ok(worst)
    }
}

fn seed_dual<R: Real>(x: &[R], j: usize) -> Vec<Dual<R>> {
    x.iter()
        .enumerate()
        .map(|(k, &v)| if k == j { Dual::variable(v) } else { Dual::constant(v) })
        .collect()
}

fn hessian_of<R: Real>(x: &[R], f: impl Fn(&[HyperDual<R>]) -> HyperDual<R>) -> DMatrix<R> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: Vec<HyperDual<R>> = x
                .iter()
                .enumerate()
                .map(|(k, &val)| {
                    let e1 = if k == i { R::one() } else { R::zero() };
                    let e2 = if k == j { R::one() } else { R::zero() };
                    HyperDual::seeded(val, e1, e2)
                })
                .collect();
            let hij = f(&v).e12;
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
    }
    h
}

fn guard<R: Real>(x: &[R], step: usize) -> Result<()> {
    let lim = R::lit(DIVERGENCE_LIMIT);
    if x.iter().all(|v| v.abs() <= lim) {
        Ok(())
    } else {
        Err(TrfeError::DivergedRollout { step, sample: None })
    }
}

fn checked_cost<R: Real>(c: R, name: &str, t: usize) -> Result<R> {
    if c >= R::zero() && c.is_finite() {
        Ok(c)
    } else {
        Err(TrfeError::ModelContract(format!("{name}_{t} = {c} is not a finite nonnegative cost")))
    }
}
