//! Thermodynamic-style lower bounds on the cost of partially observed
//! stochastic control, from free-energy curves and information certificates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod baselines;
pub mod certificates;
pub mod convexity;
pub mod error;
pub mod freeenergy;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod selfconsistent;
pub mod stats;
pub mod systems;

pub use error::{Result, TrfeError};
pub use model::{Dynamics, InitialState, NoiseBank, SystemModel};
pub use scalar::{Real, Scalar};

pub type FreeEnergyCurve = freeenergy::FreeEnergyCurve<f64>;
pub type CICertificate = certificates::CICertificate<f64>;
pub type BoundReport = selfconsistent::BoundReport<f64>;
pub type ConvexityCertificate = convexity::ConvexityCertificate<f64>;
