//! Cost-information certificates: monotone maps `J ↦ Ī(J)` bounding the
//! total sensor mutual information (nats) any policy of cost at most `J`
//! can collect.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, TrfeError};
use crate::linalg;
use crate::model::{CoercivityParams, Dynamics, SystemModel};
use crate::scalar::Real;

/// `½ log det(I + Σ_v⁻¹ Σ_h)`, evaluated through the eigenvalues of
/// `Σ_v^{-1/2} Σ_h Σ_v^{-1/2}`.
pub fn gaussian_mi_bound<R: Real>(sigma_v: &DMatrix<R>, sigma_h: &DMatrix<R>) -> Result<R> {
    if sigma_v.shape() != sigma_h.shape() {
        return Err(TrfeError::Domain("Σ_v and Σ_h must have the same shape".into()));
    }
    linalg::check_spd(sigma_v, "Σ_v").map_err(|e| TrfeError::Domain(e.to_string()))?;
    let scale = linalg::max_abs(sigma_h).max(R::one());
    let tol = R::lit(1e-12) * scale;
    if linalg::min_eigenvalue(sigma_h) < -tol {
        return Err(TrfeError::Domain("Σ_h is not positive semidefinite".into()));
    }
    let w = linalg::sym_fn(sigma_v, |l| R::one() / l.sqrt());
    let m = &w * sigma_h * &w;
    Ok(linalg::sym_eigenvalues(&m)
        .iter()
        .fold(R::zero(), |acc, &l| acc + l.max(R::zero()).ln_1p())
        * R::lit(0.5))
}

/// Anything that maps a cost level to an information budget in nats.
pub trait InformationBudget<R> {
    fn budget(&self, j: R) -> R;
}

impl<R, F: Fn(R) -> R> InformationBudget<R> for F {
    fn budget(&self, j: R) -> R {
        self(j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzParams<R> {
    pub lipschitz: R,
    pub coercivity: CoercivityParams<R>,
    pub horizon: usize,
    pub obs_dim: usize,
    /// Smallest eigenvalue of `Σ_v`.
    pub lambda_min: R,
}

impl<R: Real> LipschitzParams<R> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz > R::zero()) || !(self.lambda_min > R::zero()) {
            return Err(TrfeError::CertificateHypothesis("need L > 0 and λ_min(Σ_v) > 0".into()));
        }
        if self.horizon == 0 || self.obs_dim == 0 {
            return Err(TrfeError::CertificateHypothesis("horizon and obs_dim must be positive".into()));
        }
        CoercivityParams::new(self.coercivity.a, self.coercivity.b).map(|_| ())
    }

    /// Reads `L`, coercivity and `Σ_v` off a system.
    pub fn from_system<D: Dynamics<R>>(sys: &SystemModel<R, D>) -> Result<Self> {
        let lipschitz = sys
            .sensor_lipschitz()
            .ok_or_else(|| TrfeError::CertificateHypothesis("sensor Lipschitz constant unknown".into()))?;
        let coercivity = sys
            .coercivity()
            .ok_or_else(|| TrfeError::CertificateHypothesis("coercivity parameters unknown".into()))?;
        let p = Self {
            lipschitz,
            coercivity,
            horizon: sys.horizon(),
            obs_dim: sys.obs_dim(),
            lambda_min: linalg::min_eigenvalue(sys.sensor_noise_cov()),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillParams<R> {
    /// Mode gains, all `≥ 0`, at least one positive.
    pub gains: Vec<R>,
    /// Number of time steps sharing the budget (`T + 1`).
    pub steps: usize,
}

impl<R: Real> WaterfillParams<R> {
    /// Gains of `Q_eff^{-1/2} H_effᵀ Σ_v⁻¹ H_eff Q_eff^{-1/2}` on the subspace
    /// where `Q` is positive definite. `H` must vanish on the null space of `Q`.
    pub fn from_linear_sensor(h: &DMatrix<R>, q: &DMatrix<R>, sigma_v: &DMatrix<R>, horizon: usize) -> Result<Self> {
        let n = q.nrows();
        if h.ncols() != n || sigma_v.nrows() != h.nrows() {
            return Err(TrfeError::CertificateHypothesis("H, Q and Σ_v shapes disagree".into()));
        }
        linalg::check_spd(sigma_v, "Σ_v")?;
        let eig = SymmetricEigen::new(linalg::symmetrize(q));
        let qmax = eig.eigenvalues.iter().copied().fold(R::zero(), R::max);
        if !(qmax > R::zero()) {
            return Err(TrfeError::CertificateHypothesis("Q has no positive-definite block".into()));
        }
        let tol = R::lit(1e-12) * qmax;
        if eig.eigenvalues.iter().any(|&l| l < -tol) {
            return Err(TrfeError::CertificateHypothesis("Q is not positive semidefinite".into()));
        }
        let pos: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > tol).collect();
        let null: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] <= tol).collect();
        let hscale = linalg::max_abs(h).max(R::one());
        for &k in &null {
            let hv = h * eig.eigenvectors.column(k);
            if hv.iter().any(|v| v.abs() > R::lit(1e-10) * hscale) {
                return Err(TrfeError::CertificateHypothesis(
                    "H does not factor through the positive-definite subspace of Q".into(),
                ));
            }
        }
        let k = pos.len();
        let v_pos = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, pos[c])]);
        let q_inv_sqrt = DMatrix::from_fn(k, k, |r, c| {
            if r == c {
                R::one() / eig.eigenvalues[pos[r]].sqrt()
            } else {
                R::zero()
            }
        });
        let h_eff = h * &v_pos;
        let sv_inv = linalg::spd_inverse(sigma_v)?;
        let m = &q_inv_sqrt * h_eff.transpose() * sv_inv * &h_eff * &q_inv_sqrt;
        let gains: Vec<R> = linalg::sym_eigenvalues(&m).iter().map(|&g| g.max(R::zero())).collect();
        let gmax = gains.iter().copied().fold(R::zero(), R::max);
        if !(gmax > R::zero()) {
            return Err(TrfeError::CertificateHypothesis("Σ_v⁻¹H vanishes on the cost subspace".into()));
        }
        let gains = gains.into_iter().map(|g| if g > R::lit(1e-14) * gmax { g } else { R::zero() }).collect();
        Ok(Self { gains, steps: horizon + 1 })
    }

    pub fn from_system<D: Dynamics<R>>(sys: &SystemModel<R, D>) -> Result<Self> {
        let h = sys
            .sensor_matrix()
            .ok_or_else(|| TrfeError::CertificateHypothesis("water-filling needs a linear sensor".into()))?;
        let q = sys
            .state_weight()
            .ok_or_else(|| TrfeError::CertificateHypothesis("water-filling needs a quadratic state weight".into()))?;
        Self::from_linear_sensor(h, q, sys.sensor_noise_cov(), sys.horizon())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<R> {
    pub allocations: Vec<R>,
    pub value: R,
    pub water_level: R,
    pub kkt_residual: R,
}

/// Maximizes `½ Σ log(1 + g_j n_j)` subject to `Σ n_j = b`, `n_j ≥ 0`.
pub fn waterfill_allocation<R: Real>(gains: &[R], budget: R) -> Result<Allocation<R>> {
    if gains.iter().any(|g| !(*g >= R::zero()) || !g.is_finite()) {
        return Err(TrfeError::Domain("gains must be finite and nonnegative".into()));
    }
    if !(budget >= R::zero()) || !budget.is_finite() {
        return Err(TrfeError::Domain(format!("budget must be nonnegative, got {budget}")));
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&j| gains[j] > R::zero()).collect();
    if order.is_empty() {
        return Err(TrfeError::CertificateHypothesis("all water-filling gains are zero".into()));
    }
    order.sort_by(|&a, &b| gains[b].partial_cmp(&gains[a]).unwrap_or(std::cmp::Ordering::Equal));
    let inv: Vec<R> = order.iter().map(|&j| R::one() / gains[j]).collect();

    // Largest active set k whose level exceeds every member's floor 1/g.
    let mut level = inv[0] + budget;
    let mut acc = R::zero();
    for k in 0..inv.len() {
        acc += inv[k];
        let nu = (budget + acc) / R::lit((k + 1) as f64);
        if nu > inv[k] {
            level = nu;
        } else {
            break;
        }
    }
    let mut allocations = vec![R::zero(); gains.len()];
    let mut value = R::zero();
    for (pos, &j) in order.iter().enumerate() {
        let nj = (level - inv[pos]).max(R::zero());
        allocations[j] = nj;
        value += (gains[j] * nj).ln_1p();
    }
    value *= R::lit(0.5);
    let total = allocations.iter().fold(R::zero(), |a, &x| a + x);
    let mut kkt = (total - budget).abs();
    for (pos, &j) in order.iter().enumerate() {
        if allocations[j] > R::zero() {
            kkt = kkt.max((allocations[j] - (level - inv[pos])).abs());
        } else {
            kkt = kkt.max((level - inv[pos]).max(R::zero()));
        }
    }
    Ok(Allocation {
        allocations,
        value,
        water_level: level,
        kkt_residual: kkt,
    })
}

/// Cost-information certificate.
#[derive(Debug, Clone, PartialEq)]
pub enum CICertificate<R> {
    /// `(T p / 2) log(1 + L²(J + bT)/(a T p λ_min))`.
    Lipschitz(LipschitzParams<R>),
    /// `(T+1) · waterfill(g, J/(T+1))`.
    Waterfill(WaterfillParams<R>),
}

impl<R: Real> CICertificate<R> {
    pub fn lipschitz(params: LipschitzParams<R>) -> Result<Self> {
        params.validate()?;
        Ok(Self::Lipschitz(params))
    }

    pub fn waterfill(params: WaterfillParams<R>) -> Result<Self> {
        if params.steps == 0 || !params.gains.iter().any(|&g| g > R::zero()) {
            return Err(TrfeError::CertificateHypothesis("water-filling needs a positive gain".into()));
        }
        Ok(Self::Waterfill(params))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Lipschitz(_) => "lipschitz",
            Self::Waterfill(_) => "waterfill",
        }
    }

    /// `Ī(J)` in nats. Negative `J` is treated as zero.
    pub fn evaluate(&self, j: R) -> R {
        let j = j.max(R::zero());
        match self {
            Self::Lipschitz(p) => {
                let tp = R::lit((p.horizon * p.obs_dim) as f64);
                let t = R::lit(p.horizon as f64);
                let arg = p.lipschitz * p.lipschitz * (j + p.coercivity.b * t) / (p.coercivity.a * tp * p.lambda_min);
                tp * R::lit(0.5) * arg.ln_1p()
            }
            Self::Waterfill(p) => {
                let steps = R::lit(p.steps as f64);
                let per_step = waterfill_allocation(&p.gains, j / steps)
                    .map(|a| a.value)
                    .unwrap_or(R::zero());
                steps * per_step
            }
        }
    }
}

impl<R: Real> InformationBudget<R> for CICertificate<R> {
    fn budget(&self, j: R) -> R {
        self.evaluate(j)
    }
}

/// Water-filling certificate for a linear-sensor system.
pub fn waterfill_certificate<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>) -> Result<CICertificate<R>> {
    CICertificate::waterfill(WaterfillParams::from_system(sys)?)
}

pub fn lipschitz_certificate<R: Real>(params: LipschitzParams<R>) -> Result<CICertificate<R>> {
    CICertificate::lipschitz(params)
}
