//! Semiconvexity of the realized-input cost `S(ζ)` and the resulting
//! inverse-temperature ceiling below which `F_β + J^u` is strictly convex.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::autodiff::HyperDual;
use crate::error::{Result, TrfeError};
use crate::linalg;
use crate::model::{Dynamics, NoiseBank, SystemModel};
use crate::scalar::Real;

/// Hessian of `S(ζ) = Σ_t q_t(x_t(ζ))` (noise-free, mean initial state) by
/// hyper-dual forward mode, one seeded pass per pair `i ≤ j`.
///
/// Each pass starts at the earlier of the two input times: states before it
/// do not depend on either input.
pub fn hessian_s<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>, zeta: &[R]) -> Result<DMatrix<R>> {
    let h = hessian_pairs(sys, zeta, true)?;
    Ok(linalg::symmetrize(&h))
}

/// As [`hessian_s`] but every ordered pair `(i, j)` is seeded separately and
/// no symmetrization is applied.
pub fn hessian_s_unsymmetrized<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>, zeta: &[R]) -> Result<DMatrix<R>> {
    hessian_pairs(sys, zeta, false)
}

fn hessian_pairs<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>, zeta: &[R], mirror: bool) -> Result<DMatrix<R>> {
    check_inputs(sys, zeta)?;
    let (m, len) = (sys.control_dim(), sys.input_len());
    let prefix = noise_free_states(sys, zeta)?;
    let mut h = DMatrix::zeros(len, len);
    for i in 0..len {
        let j_start = if mirror { i } else { 0 };
        for j in j_start..len {
            let t0 = i.min(j) / m;
            let seeded: Vec<HyperDual<R>> = zeta
                .iter()
                .enumerate()
                .map(|(k, &z)| {
                    let e1 = if k == i { R::one() } else { R::zero() };
                    let e2 = if k == j { R::one() } else { R::zero() };
                    HyperDual::seeded(z, e1, e2)
                })
                .collect();
            let x_from: Vec<HyperDual<R>> = prefix[t0].iter().map(|&v| HyperDual::constant(v)).collect();
            let s = sys.realized_cost(&seeded, t0, &x_from)?;
            if !(s.e12.is_finite() && s.re.is_finite()) {
                return Err(TrfeError::Differentiation(format!("non-finite second derivative at ({i}, {j})")));
            }
            h[(i, j)] = s.e12;
            if mirror {
                h[(j, i)] = s.e12;
            }
        }
    }
    Ok(h)
}

fn check_inputs<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>, zeta: &[R]) -> Result<()> {
    if !sys.is_matched_noise() {
        return Err(TrfeError::Precondition("realized-input Hessian needs matched noise".into()));
    }
    if zeta.len() != sys.input_len() || zeta.iter().any(|z| !z.is_finite()) {
        return Err(TrfeError::Precondition(format!(
            "ζ must be a finite vector of length {}",
            sys.input_len()
        )));
    }
    Ok(())
}

fn noise_free_states<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>, zeta: &[R]) -> Result<Vec<Vec<R>>> {
    let zero_w = vec![R::zero(); sys.horizon() * sys.noise_dim()];
    let states = sys.simulate(sys.initial_state().mean().as_slice(), zeta, &zero_w)?;
    Ok((0..states.nrows()).map(|t| states.row(t).iter().copied().collect()).collect())
}

/// `S(ζ)` itself.
pub fn realized_cost<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>, zeta: &[R]) -> Result<R> {
    check_inputs(sys, zeta)?;
    sys.realized_cost(zeta, 0, sys.initial_state().mean().as_slice())
}

/// Central-difference Hessian with step `h`, for cross-checking.
pub fn hessian_s_fd<R: Real, D: Dynamics<R>>(sys: &SystemModel<R, D>, zeta: &[R], h: R) -> Result<DMatrix<R>> {
    check_inputs(sys, zeta)?;
    let len = zeta.len();
    let x0 = sys.initial_state().mean().as_slice().to_vec();
    let s = |z: &[R]| sys.realized_cost(z, 0, &x0);
    let four_h2 = R::lit(4.0) * h * h;
    let mut out = DMatrix::zeros(len, len);
    let mut z = zeta.to_vec();
    for i in 0..len {
        for j in i..len {
            let mut corner = |di: R, dj: R| -> Result<R> {
                z[i] += di;
                z[j] += dj;
                let v = s(&z);
                z[i] = zeta[i];
                z[j] = zeta[j];
                v
            };
            let v = (corner(h, h)? - corner(h, -h)? - corner(-h, h)? + corner(-h, -h)?) / four_h2;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HessianMethod {
    DualNumber,
    FiniteDifference,
}

/// Outcome of the ceiling formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaCeiling<R> {
    Finite(R),
    /// `α = 0`: convex for every `β`.
    Infinite,
    /// `α ≥ R_min`: no certified range.
    Undefined,
}

impl<R: Real> BetaCeiling<R> {
    /// `+∞` for [`BetaCeiling::Infinite`], `None` when undefined.
    pub fn value(&self) -> Option<R> {
        match *self {
            Self::Finite(b) => Some(b),
            Self::Infinite => Some(R::infinity()),
            Self::Undefined => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        !matches!(self, Self::Undefined)
    }
}

/// `β̄ = (R_min − α)/(R_min α σ̄²)`.
pub fn beta_max<R: Real>(alpha: R, r_min: R, sigma_bar_sq: R) -> Result<BetaCeiling<R>> {
    if !(r_min > R::zero()) || !(sigma_bar_sq > R::zero()) || !(alpha >= R::zero()) {
        return Err(TrfeError::Domain("need r_min > 0, σ̄² > 0 and α ≥ 0".into()));
    }
    if alpha == R::zero() {
        Ok(BetaCeiling::Infinite)
    } else if alpha >= r_min {
        Ok(BetaCeiling::Undefined)
    } else {
        Ok(BetaCeiling::Finite((r_min - alpha) / (r_min * alpha * sigma_bar_sq)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate<R> {
    pub alpha_hat: R,
    pub beta_max_hat: BetaCeiling<R>,
    pub n_alpha: usize,
    /// Smallest Hessian eigenvalue per sample.
    pub min_eigs: Vec<R>,
    pub method: HessianMethod,
    /// `λ_min(R)`.
    pub r_min: R,
    /// `λ_max(Σ_w)`.
    pub sigma_bar_sq: R,
    /// Sampled maxima can only under-cover the true constant (`α̂ ≤ α`).
    pub sampled: bool,
}

impl<R: Real> ConvexityCertificate<R> {
    /// Rebuilds the certificate from a prefix of the samples.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.min_eigs.len());
        from_min_eigs(self.min_eigs[..n].to_vec(), self.r_min, self.sigma_bar_sq, self.method)
    }
}

fn from_min_eigs<R: Real>(min_eigs: Vec<R>, r_min: R, sigma_bar_sq: R, method: HessianMethod) -> Result<ConvexityCertificate<R>> {
    let lowest = min_eigs.iter().copied().fold(R::infinity(), R::min);
    let alpha_hat = (-lowest).max(R::zero());
    Ok(ConvexityCertificate {
        alpha_hat,
        beta_max_hat: beta_max(alpha_hat, r_min, sigma_bar_sq)?,
        n_alpha: min_eigs.len(),
        min_eigs,
        method,
        r_min,
        sigma_bar_sq,
        sampled: true,
    })
}

/// Smallest eigenvalue, with values indistinguishable from zero at the
/// matrix's precision mapped to exactly zero.
fn min_eig_rounded<R: Real>(h: &DMatrix<R>) -> R {
    let scale = linalg::max_abs(h).max(R::lit(1e-300));
    let floor = R::lit(64.0) * R::default_epsilon() * scale * R::lit(h.nrows() as f64);
    let l = linalg::min_eigenvalue(h);
    if l.abs() <= floor {
        R::zero()
    } else {
        l
    }
}

/// `α̂ = max(0, −min_i λ_min(∇²S(ζ⁽ⁱ⁾)))` over `ζ⁽ⁱ⁾ = u_nom + chol(Σ_w) ξ⁽ⁱ⁾`.
pub fn estimate_semiconvexity<R: Real, D: Dynamics<R>>(
    sys: &SystemModel<R, D>,
    u_nom: &[R],
    n_alpha: usize,
    seed: u64,
) -> Result<ConvexityCertificate<R>> {
    if n_alpha == 0 {
        return Err(TrfeError::Precondition("n_alpha must be positive".into()));
    }
    let r = sys
        .control_weight()
        .ok_or_else(|| TrfeError::Precondition("semiconvexity certificate needs a quadratic control cost".into()))?;
    let r_min = linalg::min_eigenvalue(r);
    let sigma_bar_sq = linalg::sym_eigenvalues(sys.process_noise_cov()).max();
    let bank = NoiseBank::independent(seed, n_alpha, sys.horizon(), sys.state_dim(), sys.noise_dim());
    let min_eigs: Vec<R> = (0..n_alpha)
        .into_par_iter()
        .map(|i| {
            let w = sys.scaled_noise(&bank, i);
            let zeta: Vec<R> = u_nom.iter().zip(&w).map(|(&u, &w)| u + w).collect();
            hessian_s(sys, &zeta).map(|h| min_eig_rounded(&h))
        })
        .collect::<Result<_>>()?;
    if !sys.initial_state().is_fixed() {
        log::warn!("random initial state: semiconvexity is estimated at the mean and is not certified");
    }
    from_min_eigs(min_eigs, r_min, sigma_bar_sq, HessianMethod::DualNumber)
}
