use thiserror::Error;

/// Coarse failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Condition,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system '{name}'; available: {available}")]
    UnknownSystem { name: String, available: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite evaluation of {what} at {point:?}")]
    NonFinite { what: String, point: Vec<f64> },

    #[error("state norm exceeded blow-up bound {bound} at t = {t}")]
    BlowUp { t: f64, bound: f64 },

    #[error("step size underflow at t = {t} (h = {h}); likely a tangency stall")]
    StepUnderflow { t: f64, h: f64 },

    #[error("event budget of {max} exceeded at t = {t}")]
    EventBudget { max: usize, t: f64 },

    #[error("no crossing or near-zero extremum of {patch} found in the arc")]
    NotFound { patch: String },

    #[error("point {point:?} is not within tolerance of any surface")]
    NotOnSurface { point: Vec<f64> },

    #[error("inverse jump failed on {patch}: residual {residual:e}")]
    InversionFailure { patch: String, residual: f64 },

    #[error("meeting time search exceeded the (A3) horizon {horizon}")]
    A3Violation { horizon: f64 },

    #[error("grazing gradient of tau is singular at {point:?}")]
    SingularTau { point: Vec<f64> },

    #[error("condition (A2) failed: {detail}")]
    A2Failed { detail: String },

    #[error("condition (A6) violated: |det| = {det:e} below floor {floor:e}")]
    A6Violation { det: f64, floor: f64 },

    #[error("branch crossing: finite-difference probe on unknown {index} changed the event signature")]
    BranchCrossing { index: usize },

    #[error("Newton did not converge in {iterations} iterations (|S| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{count} bivalued events exceed the branch budget {max}")]
    BranchBudget { count: usize, max: usize },

    #[error("eigen-decomposition residual {residual:e} above {tol:e}")]
    EigenResidual { residual: f64, tol: f64 },

    #[error("residual unavailable: {0}")]
    ResidualUnavailable(Box<Error>),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::UnknownSystem { .. } | Error::Invalid(_) | Error::NotOnSurface { .. } => {
                ErrorKind::Validation
            }
            Error::A2Failed { .. }
            | Error::A6Violation { .. }
            | Error::BranchCrossing { .. }
            | Error::A3Violation { .. } => ErrorKind::Condition,
            Error::ResidualUnavailable(inner) => inner.kind(),
            _ => ErrorKind::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
