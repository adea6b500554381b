use thiserror::Error;

/// Failures raised by the bound pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrfeError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("rollout diverged at step {step} (sample {sample:?})")]
    DivergedRollout { step: usize, sample: Option<usize> },

    #[error("model contract violated: {0}")]
    ModelContract(String),

    #[error("p is not absolutely continuous w.r.t. q at atom {atom}")]
    AbsoluteContinuity { atom: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("certificate hypothesis failed: {0}")]
    CertificateHypothesis(String),

    #[error("estimation failure: {0}")]
    EstimationFailure(String),

    #[error("fixed-point sign conditions fail: g(lo) = {g_lo}, g(hi) = {g_hi}")]
    HypothesisViolation { g_lo: f64, g_hi: f64 },

    #[error("non-differentiable cost: {0}")]
    Differentiation(String),

    #[error("numerical conditioning: {0}")]
    NumericalConditioning(String),

    #[error("precondition: {0}")]
    Precondition(String),
}

impl TrfeError {
    /// Attaches a sample index to a diverged-rollout error.
    pub fn with_sample(self, i: usize) -> Self {
        match self {
            TrfeError::DivergedRollout { step, .. } => TrfeError::DivergedRollout {
                step,
                sample: Some(i),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, TrfeError>;
