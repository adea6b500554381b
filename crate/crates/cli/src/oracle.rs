//! Linear-Gaussian sandwich suite: the bounds must sit below the exact
//! optimum, which must sit below the simulated LQG controller.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trfe_core::baselines::LinearSpec;
use trfe_core::systems::{double_integrator_system, scalar_lqg_system, LinearSystem};
use trfe_core::Result;

use crate::pipeline::{bound_row, shared_artifacts, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Scalar,
    TwoState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCase {
    pub kind: InstanceKind,
    pub seed: u64,
    pub sigma_v: f64,
    pub j_sc: f64,
    pub j_irr_ol: f64,
    pub j_star: f64,
    pub j_lqg: f64,
    pub se_lqg: f64,
}

impl SandwichCase {
    pub fn bound_below_optimum(&self) -> bool {
        self.j_sc <= self.j_star
    }
    pub fn optimum_below_baseline(&self) -> bool {
        self.j_star <= self.j_lqg + 3.0 * self.se_lqg
    }
    pub fn tighter_than_open_loop_mi(&self) -> bool {
        self.j_sc >= self.j_irr_ol
    }
    pub fn holds(&self) -> bool {
        self.bound_below_optimum() && self.optimum_below_baseline() && self.tighter_than_open_loop_mi()
    }
}

/// Randomized instance with parameters drawn from `seed`.
pub fn random_instance(kind: InstanceKind, seed: u64) -> Result<(LinearSystem<f64>, LinearSpec<f64>, f64)> {
    let salt = match kind {
        InstanceKind::Scalar => 0x5ca1a7,
        InstanceKind::TwoState => 0x2057a7e,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    match kind {
        InstanceKind::Scalar => {
            let sigma_v = rng.random_range(0.05..2.0);
            let (sys, spec) = scalar_lqg_system(
                rng.random_range(0.6..1.1),
                rng.random_range(0.5..1.5),
                rng.random_range(0.5..2.0),
                rng.random_range(0.2..2.0),
                rng.random_range(0.05..0.5),
                sigma_v,
                rng.random_range(0.01..0.3),
                20,
            )?;
            Ok((sys, spec, sigma_v))
        }
        InstanceKind::TwoState => {
            let sigma_v = rng.random_range(0.05..2.0);
            let (sys, spec) = double_integrator_system(
                rng.random_range(0.05..0.2),
                rng.random_range(0.05..0.5),
                rng.random_range(0.1..2.0),
                rng.random_range(0.1..1.0),
                sigma_v,
                [rng.random_range(-1.5..1.5), rng.random_range(-0.5..0.5)],
                rng.random_range(0.01..0.1),
                25,
            )?;
            Ok((sys, spec, sigma_v))
        }
    }
}

pub fn suite_settings(seed: u64) -> Settings {
    Settings {
        n_samples: 2000,
        n_betas: 30,
        beta_min: 1e-3,
        beta_max: 1e3,
        n_alpha: 16,
        epsilon: None,
        seed,
        n_eval: 2000,
        certify: true,
    }
}

pub fn run_case(kind: InstanceKind, seed: u64) -> Result<SandwichCase> {
    let (sys, spec, sigma_v) = random_instance(kind, seed)?;
    let s = suite_settings(seed);
    let shared = shared_artifacts(&sys, &s)?;
    let row = bound_row(&sys, Some(&spec), sigma_v, &shared, &s)?;
    Ok(SandwichCase {
        kind,
        seed,
        sigma_v,
        j_sc: row.j_sc,
        j_irr_ol: row.j_irr_ol,
        j_star: row.j_star.expect("linear systems carry the exact optimum"),
        j_lqg: row.j_lqg,
        se_lqg: row.se_lqg,
    })
}

/// Scalar and two-state instances for every seed.
pub fn sandwich_suite(seeds: &[u64]) -> Result<Vec<SandwichCase>> {
    let mut out = Vec::new();
    for kind in [InstanceKind::Scalar, InstanceKind::TwoState] {
        for &seed in seeds {
            out.push(run_case(kind, seed)?);
        }
    }
    Ok(out)
}
