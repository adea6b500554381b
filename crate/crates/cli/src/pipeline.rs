//! The bound computation for one system: artifacts that do not depend on the
//! sensor noise, then one row per sensor-noise level.

use trfe_core::baselines::{design_lqg, lqg_analytic_cost, lqg_baseline, optimize_open_loop, LinearSpec, OpenLoopResult};
use trfe_core::certificates::waterfill_certificate;
use trfe_core::convexity::{estimate_semiconvexity, BetaCeiling, ConvexityCertificate};
use trfe_core::freeenergy::{beta_grid, free_energy_curve, FixedPointOptions, FreeEnergyCurve};
use trfe_core::selfconsistent::solve_fixed_point;
use trfe_core::{Dynamics, NoiseBank, Result, SystemModel, TrfeError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub n_samples: usize,
    pub n_betas: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub n_alpha: usize,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub n_eval: usize,
    pub certify: bool,
}

/// Everything the sensor noise does not touch: the dynamics, cost and
/// process noise fix the open loop, the convexity ceiling and the curve.
#[derive(Debug, Clone)]
pub struct Shared {
    pub open_loop: OpenLoopResult<f64>,
    pub convexity: ConvexityCertificate<f64>,
    /// The grid's upper end after capping.
    pub beta_top: f64,
    pub certified: bool,
    pub curve: FreeEnergyCurve<f64>,
}

pub fn shared_artifacts<D: Dynamics<f64>>(sys: &SystemModel<f64, D>, s: &Settings) -> Result<Shared> {
    let bank = NoiseBank::for_system(sys, s.seed, s.n_samples);
    let open_loop = optimize_open_loop(sys, &bank, &vec![0.0; sys.input_len()])?;
    if !open_loop.converged {
        log::warn!("open-loop optimizer stopped at {} iterations, |grad| = {:.3e}", open_loop.iterations, open_loop.grad_norm);
    }
    log::info!("J_ol = {:.6} (se {:.2e})", open_loop.j_ol, open_loop.std_error);
    let convexity = estimate_semiconvexity(sys, &open_loop.u_ol, s.n_alpha, s.seed.wrapping_add(1))?;
    log::info!("alpha_hat = {:.4}, beta ceiling = {:?}", convexity.alpha_hat, convexity.beta_max_hat);
    let mut certified = sys.initial_state().is_fixed();
    let beta_top = match (s.certify, convexity.beta_max_hat) {
        (true, BetaCeiling::Finite(b)) => s.beta_max.min(b),
        (true, BetaCeiling::Undefined) => {
            log::warn!(
                "alpha_hat = {} is not below the control-weight floor {}: proceeding UNCERTIFIED over the full beta range",
                convexity.alpha_hat,
                convexity.r_min
            );
            certified = false;
            s.beta_max
        }
        (true, BetaCeiling::Infinite) => s.beta_max,
        (false, _) => {
            certified = false;
            s.beta_max
        }
    };
    if beta_top < s.beta_min {
        return Err(TrfeError::Precondition(format!(
            "beta ceiling {beta_top} lies below beta_min {}",
            s.beta_min
        )));
    }
    let grid = beta_grid(s.beta_min, beta_top, s.n_betas)?;
    let curve = free_energy_curve(sys, &bank, &grid, &open_loop.u_ol, &FixedPointOptions::default())?;
    log::info!("free-energy curve: {} of {} betas accepted", s.n_betas - curve.dropped(), s.n_betas);
    Ok(Shared {
        open_loop,
        convexity,
        beta_top,
        certified,
        curve,
    })
}

/// Totals over the horizon, not per-step rates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub sigma_v: f64,
    pub horizon: usize,
    pub j_ol: f64,
    pub se_ol: f64,
    pub j_sc: f64,
    pub se_sc: f64,
    pub j_sc_clamped: bool,
    pub j_irr_ol: f64,
    pub j_lqg: f64,
    pub se_lqg: f64,
    /// Exact optimum where one is available.
    pub j_star: Option<f64>,
    /// Certificate at `J_ol` and at `J_sc`, in nats.
    pub i_ol: f64,
    pub i_sc: f64,
    pub alpha_hat: f64,
    pub beta_max_hat: Option<f64>,
    pub beta_star: f64,
    pub dropped_betas: usize,
    pub bisection_iters: usize,
    pub certified: bool,
}

/// `sys` must share dynamics, cost and process noise with the system the
/// artifacts were built from.
pub fn bound_row<D: Dynamics<f64>>(
    sys: &SystemModel<f64, D>,
    spec: Option<&LinearSpec<f64>>,
    sigma_v: f64,
    shared: &Shared,
    s: &Settings,
) -> Result<BoundRow> {
    let cert = waterfill_certificate(sys)?;
    let ol = &shared.open_loop;
    let report = solve_fixed_point(&shared.curve, &cert, ol.j_ol, s.epsilon)?;
    let design = design_lqg(sys, &ol.u_ol)?;
    let lqg = lqg_baseline(sys, &design, s.n_eval, s.seed.wrapping_add(2) ^ sigma_v.to_bits())?;
    let j_star = spec.map(lqg_analytic_cost).transpose()?;
    Ok(BoundRow {
        sigma_v,
        horizon: sys.horizon(),
        j_ol: ol.j_ol,
        se_ol: ol.std_error,
        j_sc: report.j_sc,
        se_sc: report.std_error_at_optimum,
        j_sc_clamped: report.j_sc_clamped,
        j_irr_ol: report.j_irr_ol,
        j_lqg: lqg.j_lqg,
        se_lqg: lqg.std_error,
        j_star,
        i_ol: cert.evaluate(ol.j_ol),
        i_sc: cert.evaluate(report.j_sc),
        alpha_hat: shared.convexity.alpha_hat,
        beta_max_hat: shared.convexity.beta_max_hat.value(),
        beta_star: report.beta_star,
        dropped_betas: report.dropped_betas,
        bisection_iters: report.bisection_iters,
        certified: shared.certified,
    })
}
