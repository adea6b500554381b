//! Shipped benchmark systems: the Dubins figure-eight tracking task and
//! small linear-Gaussian instances with known optimal costs.

use nalgebra::{DMatrix, DVector};

use crate::baselines::LinearSpec;
use crate::error::{Result, TrfeError};
use crate::model::{CoercivityParams, Dynamics, InitialState, SystemModel};
use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DubinsParams<R> {
    pub speed: R,
    pub dt: R,
    pub horizon: usize,
    pub sigma_w: R,
    pub sigma_v: R,
    pub heading_weight: R,
    /// `r(δω) = control_weight · δω²`.
    pub control_weight: R,
    /// Height-to-width ratio of the lemniscate.
    pub aspect: R,
}

impl<R: Real> Default for DubinsParams<R> {
    fn default() -> Self {
        Self {
            speed: R::one(),
            dt: R::lit(0.1),
            horizon: 100,
            sigma_w: R::lit(0.1),
            sigma_v: R::one(),
            heading_weight: R::lit(0.1),
            control_weight: R::lit(0.5),
            aspect: R::lit(0.6),
        }
    }
}

impl<R: Real> DubinsParams<R> {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("speed", self.speed),
            ("dt", self.dt),
            ("sigma_w", self.sigma_w),
            ("sigma_v", self.sigma_v),
            ("heading_weight", self.heading_weight),
            ("control_weight", self.control_weight),
            ("aspect", self.aspect),
        ];
        for (name, v) in pos {
            if !(v > R::zero() && v.is_finite()) {
                return Err(TrfeError::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        if self.horizon == 0 {
            return Err(TrfeError::InvalidModel("horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory<R> {
    /// `(T+1)` positions.
    pub p_ref: Vec<[R; 2]>,
    /// `(T+1)` headings, unwrapped.
    pub theta_ref: Vec<R>,
    /// `T` feedforward turn rates.
    pub omega_nom: Vec<R>,
}

/// Gerono lemniscate `(A sin s, κA sin 2s / 2)` resampled at constant arc
/// speed, one period spanning `T·dt`.
pub fn figure_eight_reference<R: Real>(params: &DubinsParams<R>) -> ReferenceTrajectory<R> {
    const DENSE: usize = 200_000;
    let t_max = params.horizon;
    let (v, dt, kappa) = (params.speed.as_f64(), params.dt.as_f64(), params.aspect.as_f64());
    let period = v * dt * t_max as f64;

    let tau = std::f64::consts::TAU;
    let unit: Vec<[f64; 2]> = (0..=DENSE)
        .map(|k| {
            let s = tau * k as f64 / DENSE as f64;
            [s.sin(), kappa * (2.0 * s).sin() / 2.0]
        })
        .collect();
    let unit_len: f64 = unit.windows(2).map(|w| dist(w[0], w[1])).sum();
    let scale = period / unit_len;
    let curve: Vec<[f64; 2]> = unit.iter().map(|p| [p[0] * scale, p[1] * scale]).collect();
    let mut arc = Vec::with_capacity(curve.len());
    arc.push(0.0);
    for w in curve.windows(2) {
        arc.push(arc.last().unwrap() + dist(w[0], w[1]));
    }
    let total = *arc.last().unwrap();

    // T+2 points so the heading at t = T is defined.
    let mut pts = Vec::with_capacity(t_max + 2);
    let mut seg = 0usize;
    for t in 0..t_max + 2 {
        let target = (t as f64 * v * dt) % total;
        if target < arc[seg] {
            seg = 0;
        }
        while seg + 1 < arc.len() - 1 && arc[seg + 1] < target {
            seg += 1;
        }
        let span = arc[seg + 1] - arc[seg];
        let f = if span > 0.0 { (target - arc[seg]) / span } else { 0.0 };
        let (a, b) = (curve[seg], curve[seg + 1]);
        pts.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
    }

    let mut theta = Vec::with_capacity(t_max + 1);
    for w in pts.windows(2) {
        let raw = (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]);
        let th = match theta.last() {
            None => raw,
            Some(&prev) => prev + wrap_angle(raw - prev),
        };
        theta.push(th);
    }
    let omega: Vec<f64> = theta.windows(2).map(|w| (w[1] - w[0]) / dt).collect();

    ReferenceTrajectory {
        p_ref: pts[..t_max + 1].iter().map(|p| [R::lit(p[0]), R::lit(p[1])]).collect(),
        theta_ref: theta.into_iter().map(R::lit).collect(),
        omega_nom: omega.into_iter().map(R::lit).collect(),
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    a - tau * ((a + std::f64::consts::PI) / tau).floor()
}

/// Unicycle at constant speed steered by `ω = ω_nom,t + δω + w`.
#[derive(Debug, Clone)]
pub struct DubinsDynamics<R> {
    params: DubinsParams<R>,
    reference: ReferenceTrajectory<R>,
}

impl<R: Real> DubinsDynamics<R> {
    pub fn params(&self) -> &DubinsParams<R> {
        &self.params
    }

    pub fn reference(&self) -> &ReferenceTrajectory<R> {
        &self.reference
    }

    /// Reference state `(p_ref, θ_ref)` at step `t`.
    pub fn reference_state(&self, t: usize) -> [R; 3] {
        let p = self.reference.p_ref[t];
        [p[0], p[1], self.reference.theta_ref[t]]
    }

    /// Tracking cost in raw coordinates `‖p − p_ref‖² + w_h(1 − cos(θ − θ_ref)) + c·(ω − ω_nom)²`.
    pub fn raw_stage_cost(&self, t: usize, x: &[R], omega: Option<R>) -> R {
        let s = self.reference_state(t);
        let (dx, dy) = (x[0] - s[0], x[1] - s[1]);
        let mut c = dx * dx + dy * dy + self.params.heading_weight * (R::one() - (x[2] - s[2]).cos());
        if let Some(om) = omega {
            let d = om - self.reference.omega_nom[t];
            c += self.params.control_weight * d * d;
        }
        c
    }
}

impl<R: Real> Dynamics<R> for DubinsDynamics<R> {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.params.horizon
    }

    fn step<S: Scalar<Real = R>>(&self, t: usize, x: &[S], u: &[S], w: &[S], next: &mut [S]) {
        let zeta = u[0] + w[0];
        let omega = S::from_real(self.reference.omega_nom[t]) + zeta;
        let vdt = self.params.speed * self.params.dt;
        next[0] = x[0] + x[2].cos().scale(vdt);
        next[1] = x[1] + x[2].sin().scale(vdt);
        next[2] = x[2] + omega.scale(self.params.dt);
    }

    fn observe<S: Scalar<Real = R>>(&self, _t: usize, x: &[S], y: &mut [S]) {
        y[0] = x[0];
        y[1] = x[1];
    }

    fn state_cost<S: Scalar<Real = R>>(&self, t: usize, x: &[S]) -> S {
        let s = self.reference_state(t);
        let dx = x[0] - S::from_real(s[0]);
        let dy = x[1] - S::from_real(s[1]);
        let heading = S::num(1.0) - (x[2] - S::from_real(s[2])).cos();
        dx * dx + dy * dy + heading.scale(self.params.heading_weight)
    }

    fn control_cost<S: Scalar<Real = R>>(&self, _t: usize, u: &[S]) -> S {
        (u[0] * u[0]).scale(self.params.control_weight)
    }

    fn cost_coordinates(&self, t: usize, x: &[R]) -> Vec<R> {
        let p = self.reference.p_ref[t];
        vec![x[0] - p[0], x[1] - p[1]]
    }
}

pub type DubinsSystem<R> = SystemModel<R, DubinsDynamics<R>>;

/// Dubins tracking model with the control stored as a deviation from `ω_nom`.
///
/// `Q = diag(1, 1, 0)` and `H = [I₂ 0]` are attached for the certificates, with
/// `R = 2·control_weight` so that `r(δω) = ½ R δω²`.
pub fn dubins_system<R: Real>(params: DubinsParams<R>) -> Result<DubinsSystem<R>> {
    params.validate()?;
    let reference = figure_eight_reference(&params);
    let dynamics = DubinsDynamics { params, reference };
    let x0 = DVector::from_row_slice(&dynamics.reference_state(0));
    let sw2 = params.sigma_w * params.sigma_w;
    let sv2 = params.sigma_v * params.sigma_v;
    let h = DMatrix::from_row_slice(2, 3, &[R::one(), R::zero(), R::zero(), R::zero(), R::one(), R::zero()]);
    let q = DMatrix::from_diagonal(&DVector::from_row_slice(&[R::one(), R::one(), R::zero()]));
    SystemModel::builder(dynamics)
        .process_noise(DMatrix::from_element(1, 1, sw2))
        .sensor_noise(DMatrix::identity(2, 2) * sv2)
        .initial_state(InitialState::Fixed(x0))
        .matched_noise(true)
        .quadratic_control(DMatrix::from_element(1, 1, R::lit(2.0) * params.control_weight))
        .linear_sensor(h)
        .state_weight(q)
        .sensor_lipschitz(R::one())
        .coercivity(CoercivityParams::new(R::one(), R::zero())?)
        .build()
}

/// `x⁺ = A x + B(u + w)`, `y = H x + v`, `q = xᵀQx`, `r = ½ uᵀRu`.
#[derive(Debug, Clone)]
pub struct LinearDynamics<R: Real> {
    a: DMatrix<R>,
    b: DMatrix<R>,
    h: DMatrix<R>,
    q: DMatrix<R>,
    r: DMatrix<R>,
    horizon: usize,
}

impl<R: Real> LinearDynamics<R> {
    pub fn a(&self) -> &DMatrix<R> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<R> {
        &self.b
    }
}

fn quad<S: Scalar>(m: &DMatrix<S::Real>, x: &[S]) -> S {
    let mut acc = S::zero();
    for i in 0..x.len() {
        for j in 0..x.len() {
            let mij = m[(i, j)];
            if mij != <S::Real as num_traits::Zero>::zero() {
                acc += (x[i] * x[j]).scale(mij);
            }
        }
    }
    acc
}

fn mat_vec<S: Scalar>(m: &DMatrix<S::Real>, x: &[S], out: &mut [S]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = S::zero();
        for (j, xj) in x.iter().enumerate() {
            acc += xj.scale(m[(i, j)]);
        }
        *o = acc;
    }
}

impl<R: Real> Dynamics<R> for LinearDynamics<R> {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn obs_dim(&self) -> usize {
        self.h.nrows()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step<S: Scalar<Real = R>>(&self, _t: usize, x: &[S], u: &[S], w: &[S], next: &mut [S]) {
        let zeta: Vec<S> = u.iter().zip(w).map(|(&a, &b)| a + b).collect();
        let mut bz = vec![S::zero(); next.len()];
        mat_vec(&self.a, x, next);
        mat_vec(&self.b, &zeta, &mut bz);
        for (n, v) in next.iter_mut().zip(bz) {
            *n += v;
        }
    }

    fn observe<S: Scalar<Real = R>>(&self, _t: usize, x: &[S], y: &mut [S]) {
        mat_vec(&self.h, x, y);
    }

    fn state_cost<S: Scalar<Real = R>>(&self, _t: usize, x: &[S]) -> S {
        quad(&self.q, x)
    }

    fn control_cost<S: Scalar<Real = R>>(&self, _t: usize, u: &[S]) -> S {
        quad(&self.r, u).scale(R::lit(0.5))
    }
}

pub type LinearSystem<R> = SystemModel<R, LinearDynamics<R>>;

/// Parameters of a time-invariant matched-noise linear-Gaussian instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams<R: Real> {
    pub a: DMatrix<R>,
    pub b: DMatrix<R>,
    pub h: DMatrix<R>,
    pub q: DMatrix<R>,
    pub r: DMatrix<R>,
    /// Covariance of `w` (on the control channel).
    pub sigma_w: DMatrix<R>,
    pub sigma_v: DMatrix<R>,
    pub x0_mean: DVector<R>,
    /// Must be positive definite.
    pub x0_cov: DMatrix<R>,
    pub horizon: usize,
}

/// Builds both the simulator and the matching oracle spec from one parameter set.
pub fn linear_system<R: Real>(p: LinearParams<R>) -> Result<(LinearSystem<R>, LinearSpec<R>)> {
    let n = p.a.nrows();
    let m = p.b.ncols();
    if p.a.ncols() != n || p.b.nrows() != n || p.h.ncols() != n || p.q.nrows() != n || p.r.nrows() != m {
        return Err(TrfeError::InvalidModel("inconsistent linear-system shapes".into()));
    }
    crate::linalg::check_spd(&p.q, "Q")
        .map_err(|_| TrfeError::CertificateHypothesis("state weight Q must be positive definite".into()))?;
    crate::linalg::check_spd(&p.r, "R")?;
    let lambda_q = crate::linalg::min_eigenvalue(&p.q);
    let dynamics = LinearDynamics {
        a: p.a.clone(),
        b: p.b.clone(),
        h: p.h.clone(),
        q: p.q.clone(),
        r: p.r.clone(),
        horizon: p.horizon,
    };
    let sys = SystemModel::builder(dynamics)
        .process_noise(p.sigma_w.clone())
        .sensor_noise(p.sigma_v.clone())
        .initial_state(InitialState::Gaussian {
            mean: p.x0_mean.clone(),
            cov: p.x0_cov.clone(),
        })
        .matched_noise(true)
        .quadratic_control(p.r.clone())
        .linear_sensor(p.h.clone())
        .state_weight(p.q.clone())
        .coercivity(CoercivityParams::new(lambda_q, R::zero())?)
        .build()?;
    let spec = LinearSpec {
        w: &p.b * &p.sigma_w * p.b.transpose(),
        a: p.a,
        b: p.b,
        h: p.h,
        sigma_v: p.sigma_v,
        q: p.q,
        r: p.r * R::lit(0.5),
        x0_mean: p.x0_mean,
        x0_cov: p.x0_cov,
        horizon: p.horizon,
    };
    Ok((sys, spec))
}

/// Scalar instance `x⁺ = a x + b(u + w)`, `y = x + v`, `q = q x²`, `r = ½ r u²`,
/// `x₀ ~ N(0, x0_var)`. Standard deviations for the noises, a variance for `x₀`.
#[allow(clippy::too_many_arguments)]
pub fn scalar_lqg_system<R: Real>(
    a: R,
    b_coef: R,
    q: R,
    r: R,
    sigma_w: R,
    sigma_v: R,
    x0_var: R,
    horizon: usize,
) -> Result<(LinearSystem<R>, LinearSpec<R>)> {
    if !(q > R::zero()) {
        return Err(TrfeError::CertificateHypothesis(format!("q must be positive, got {q}")));
    }
    for (name, v) in [("r", r), ("sigma_w", sigma_w), ("sigma_v", sigma_v), ("x0_var", x0_var)] {
        if !(v > R::zero()) {
            return Err(TrfeError::InvalidModel(format!("{name} must be positive, got {v}")));
        }
    }
    let s = |v: R| DMatrix::from_element(1, 1, v);
    linear_system(LinearParams {
        a: s(a),
        b: s(b_coef),
        h: s(R::one()),
        q: s(q),
        r: s(r),
        sigma_w: s(sigma_w * sigma_w),
        sigma_v: s(sigma_v * sigma_v),
        x0_mean: DVector::zeros(1),
        x0_cov: s(x0_var),
        horizon,
    })
}

/// Discretized double integrator with a position sensor: state `(position, velocity)`,
/// force input, `Q = diag(1, q_vel)`.
#[allow(clippy::too_many_arguments)]
pub fn double_integrator_system<R: Real>(
    dt: R,
    q_vel: R,
    r: R,
    sigma_w: R,
    sigma_v: R,
    x0_mean: [R; 2],
    x0_var: R,
    horizon: usize,
) -> Result<(LinearSystem<R>, LinearSpec<R>)> {
    let (z, o) = (R::zero(), R::one());
    linear_system(LinearParams {
        a: DMatrix::from_row_slice(2, 2, &[o, dt, z, o]),
        b: DMatrix::from_row_slice(2, 1, &[dt * dt * R::lit(0.5), dt]),
        h: DMatrix::from_row_slice(1, 2, &[o, z]),
        q: DMatrix::from_diagonal(&DVector::from_row_slice(&[o, q_vel])),
        r: DMatrix::from_element(1, 1, r),
        sigma_w: DMatrix::from_element(1, 1, sigma_w * sigma_w),
        sigma_v: DMatrix::from_element(1, 1, sigma_v * sigma_v),
        x0_mean: DVector::from_row_slice(&x0_mean),
        x0_cov: DMatrix::identity(2, 2) * x0_var,
        horizon,
    })
}
