use thiserror::Error;

/// Errors raised by the tilting, density and sampling machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tilt parameter {t} outside the model domain ({lo}, {hi})")]
    TiltOutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("log-MGF is not strictly convex at t = {t} (second derivative {s2})")]
    NonconvexLogMgf { t: f64, s2: f64 },

    #[error("mean target {target} is not attained on the tilt domain{}", fmt_index(.index))]
    TargetOutsideRange { target: f64, index: Option<usize> },

    #[error("mean inversion did not converge for target {target} after {iterations} iterations")]
    NoConvergence { target: f64, iterations: usize },

    #[error("normalizing constant estimate is degenerate (all integrand values vanish)")]
    DegenerateEstimate,

    #[error("rejection envelope failure: acceptance rate {rate:e} over {proposals} proposals")]
    EnvelopeFailure { rate: f64, proposals: u64 },

    #[error("adaptive quadrature on [{lo}, {hi}] stalled with error estimate {error:e}")]
    QuadratureFailed { lo: f64, hi: f64, error: f64 },

    #[error("invalid run specification: {0}")]
    InvalidSpec(String),

    #[error("model capability missing: {0}")]
    Unsupported(&'static str),
}

fn fmt_index(index: &Option<usize>) -> String {
    match index {
        Some(i) => format!(" (step {i})"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a step index to a range error, leaving other variants unchanged.
    pub fn at_step(self, i: usize) -> Self {
        match self {
            Error::TargetOutsideRange { target, .. } => Error::TargetOutsideRange { target, index: Some(i) },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
