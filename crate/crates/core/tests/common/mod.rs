#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use trfe_core::model::{Dynamics, InitialState, SystemModel};
use trfe_core::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageCost {
    Zero,
    /// `c·x²`
    Quadratic(f64),
    /// `1 − cos x`
    OneMinusCos,
}

/// Scalar chain `x⁺ = a·x + (u + w)` with a chosen state cost and `r = ½u²`.
#[derive(Debug, Clone)]
pub struct Chain {
    pub a: f64,
    pub horizon: usize,
    pub cost: StageCost,
}

impl Dynamics<f64> for Chain {
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn step<S: Scalar<Real = f64>>(&self, _t: usize, x: &[S], u: &[S], w: &[S], next: &mut [S]) {
        next[0] = x[0].scale(self.a) + u[0] + w[0];
    }
    fn observe<S: Scalar<Real = f64>>(&self, _t: usize, x: &[S], y: &mut [S]) {
        y[0] = x[0];
    }
    fn state_cost<S: Scalar<Real = f64>>(&self, _t: usize, x: &[S]) -> S {
        match self.cost {
            StageCost::Zero => S::zero(),
            StageCost::Quadratic(c) => (x[0] * x[0]).scale(c),
            StageCost::OneMinusCos => S::num(1.0) - x[0].cos(),
        }
    }
    fn control_cost<S: Scalar<Real = f64>>(&self, _t: usize, u: &[S]) -> S {
        (u[0] * u[0]).scale(0.5)
    }
}

pub fn chain(a: f64, horizon: usize, cost: StageCost, sigma_w: f64, x0: InitialState<f64>) -> SystemModel<f64, Chain> {
    SystemModel::builder(Chain { a, horizon, cost })
        .process_noise(DMatrix::from_element(1, 1, sigma_w * sigma_w))
        .sensor_noise(DMatrix::from_element(1, 1, 1.0))
        .initial_state(x0)
        .matched_noise(true)
        .quadratic_control(DMatrix::from_element(1, 1, 1.0))
        .build()
        .expect("valid chain")
}

pub fn fixed(x: f64) -> InitialState<f64> {
    InitialState::Fixed(DVector::from_element(1, x))
}

pub fn gaussian(mean: f64, var: f64) -> InitialState<f64> {
    InitialState::Gaussian {
        mean: DVector::from_element(1, mean),
        cov: DMatrix::from_element(1, 1, var),
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
