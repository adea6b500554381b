//! Irreducible cost and the self-consistent fixed point `J = J_irr(Ī(J))`.

use crate::certificates::InformationBudget;
use crate::error::{Result, TrfeError};
use crate::freeenergy::FreeEnergyCurve;
use crate::scalar::Real;

/// `max_k {F*_k − Ī/β_k}` over accepted entries, with the maximizing index.
pub fn irreducible_cost_argmax<R: Real>(curve: &FreeEnergyCurve<R>, i_bar: R) -> Result<(R, usize)> {
    if !(i_bar >= R::zero()) {
        return Err(TrfeError::Domain(format!("information budget must be nonnegative, got {i_bar}")));
    }
    let mut best: Option<(R, usize)> = None;
    for (k, e) in curve.entries.iter().enumerate() {
        if !e.accepted {
            continue;
        }
        let v = e.f_star - i_bar / e.beta;
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, k));
        }
    }
    best.ok_or_else(|| TrfeError::EstimationFailure("free-energy curve has no accepted entries".into()))
}

pub fn irreducible_cost<R: Real>(curve: &FreeEnergyCurve<R>, i_bar: R) -> Result<R> {
    irreducible_cost_argmax(curve, i_bar).map(|(v, _)| v)
}

/// `Φ(J) = J_irr(Ī(J))`.
pub fn phi<R: Real>(curve: &FreeEnergyCurve<R>, cert: &impl InformationBudget<R>, j: R) -> Result<R> {
    if !(j >= R::zero()) {
        return Err(TrfeError::Domain(format!("J must be nonnegative, got {j}")));
    }
    irreducible_cost(curve, cert.budget(j))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint<R> {
    pub j: R,
    pub iterations: usize,
    /// `|Φ(J) − J|` at the returned point.
    pub residual: R,
    pub converged: bool,
}

/// Bisection for `Φ(J) = J` on `[0, j_hi]`, `Φ` nonincreasing.
///
/// Requires `Φ(0) > 0` and `Φ(j_hi) < j_hi`; stops once the bracket is no
/// wider than `eps` and `|Φ(J) − J| ≤ eps`, or after `max_iters` halvings.
pub fn bisect_fixed_point<R: Real>(
    mut phi: impl FnMut(R) -> Result<R>,
    j_hi: R,
    eps: R,
    max_iters: usize,
) -> Result<FixedPoint<R>> {
    if !(j_hi > R::zero()) || !(eps > R::zero()) {
        return Err(TrfeError::Precondition("need j_hi > 0 and eps > 0".into()));
    }
    let g_lo = phi(R::zero())?;
    let g_hi = phi(j_hi)? - j_hi;
    if !(g_lo > R::zero() && g_hi < R::zero()) {
        return Err(TrfeError::HypothesisViolation {
            g_lo: g_lo.as_f64(),
            g_hi: g_hi.as_f64(),
        });
    }
    let (mut lo, mut hi) = (R::zero(), j_hi);
    let half = R::lit(0.5);
    let mut iterations = 0;
    let mut mid = (lo + hi) * half;
    let mut g_mid = phi(mid)? - mid;
    loop {
        if hi - lo <= eps && g_mid.abs() <= eps {
            return Ok(FixedPoint {
                j: mid,
                iterations,
                residual: g_mid.abs(),
                converged: true,
            });
        }
        if iterations >= max_iters {
            return Ok(FixedPoint {
                j: mid,
                iterations,
                residual: g_mid.abs(),
                converged: false,
            });
        }
        if g_mid > R::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        mid = (lo + hi) * half;
        g_mid = phi(mid)? - mid;
    }
}

/// Default bisection tolerance `10⁻⁴ · max(J_ol, 1)`.
pub fn default_epsilon<R: Real>(j_ol: R) -> R {
    R::lit(1e-4) * j_ol.max(R::one())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport<R> {
    pub j_ol: R,
    /// Self-consistent bound, clamped at zero.
    pub j_sc: R,
    pub j_sc_clamped: bool,
    /// `J_irr(Ī(J_ol))`, not clamped.
    pub j_irr_ol: R,
    /// Grid maximizer at `J_sc`.
    pub beta_star: R,
    pub bisection_iters: usize,
    pub residual: R,
    pub converged: bool,
    pub dropped_betas: usize,
    pub std_error_at_optimum: R,
}

/// Self-consistent bound and the open-loop-MI variant for one certificate.
pub fn solve_fixed_point<R: Real>(
    curve: &FreeEnergyCurve<R>,
    cert: &impl InformationBudget<R>,
    j_ol: R,
    epsilon: Option<R>,
) -> Result<BoundReport<R>> {
    if !(j_ol > R::zero()) {
        return Err(TrfeError::Precondition(format!("J_ol must be positive, got {j_ol}")));
    }
    let i_ol = cert.budget(j_ol);
    if !(i_ol > R::zero()) {
        return Err(TrfeError::Precondition("certificate must be positive at J_ol".into()));
    }
    let accepted: Vec<_> = curve.accepted().collect();
    for w in accepted.windows(2) {
        if w[1].f_star > w[0].f_star + w[0].std_error.max(w[1].std_error) {
            log::warn!(
                "free-energy curve rises by more than one standard error between beta {} and {}",
                w[0].beta,
                w[1].beta
            );
        }
    }
    let eps = epsilon.unwrap_or_else(|| default_epsilon(j_ol));
    let fp = bisect_fixed_point(|j| phi(curve, cert, j), j_ol, eps, 200)?;
    if !fp.converged {
        log::warn!("bisection stopped at the iteration cap with residual {}", fp.residual);
    }
    let (_, k_star) = irreducible_cost_argmax(curve, cert.budget(fp.j))?;
    let j_irr_ol = irreducible_cost(curve, i_ol)?;
    let star = &curve.entries[k_star];
    Ok(BoundReport {
        j_ol,
        j_sc: fp.j.max(R::zero()),
        j_sc_clamped: fp.j < R::zero(),
        j_irr_ol,
        beta_star: star.beta,
        bisection_iters: fp.iterations,
        residual: fp.residual,
        converged: fp.converged,
        dropped_betas: curve.dropped(),
        std_error_at_optimum: star.std_error,
    })
}
