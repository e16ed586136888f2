use alloc::string::String;
use alloc::vec::Vec;

use crate::estimators::Method;

/// Errors raised while validating data, fitting nuisance models or running inference.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DoorError {
    #[error("number of outcome levels must be at least 2, got {0}")]
    InvalidLevels(usize),
    #[error("subject {index}: outcome {value} outside 1..={levels}")]
    OutcomeOutOfRange { index: usize, value: i64, levels: usize },
    #[error("subject {index}: treatment must be 0 or 1, got {value}")]
    InvalidTreatment { index: usize, value: i64 },
    #[error("subject {index}: covariate `{column}` is not finite")]
    NonFiniteCovariate { index: usize, column: String },
    #[error("single-arm data: every subject has treatment {present}")]
    SingleArm { present: u8 },
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("propensity clip must lie in [0, 0.5), got {0}")]
    InvalidClip(f64),
    #[error("{model} design is rank deficient; collinear columns: {columns:?}")]
    RankDeficient {
        model: &'static str,
        columns: Vec<String>,
    },
    #[error("{model} fit did not converge after {iterations} iterations (possible separation)")]
    NonConvergence { model: &'static str, iterations: usize },
    #[error("{model} information matrix is singular")]
    SingularInformation { model: &'static str },
    #[error("outcome level {level} is never observed; collapse levels before fitting")]
    EmptyLevel { level: usize },
    #[error("subject {index}: propensity {propensity} violates positivity")]
    PositivityViolation { index: usize, propensity: f64 },
    #[error("expected {expected} cells, got {found}")]
    MethodMismatch { expected: Method, found: Method },
    #[error("Hajek-normalized IPTW has no analytic influence function; use the bootstrap")]
    HajekAnalytic,
    #[error("estimated variance is zero while the estimate differs from 0.5")]
    DegenerateVariance,
    #[error("dichotomization cut {cut} must lie in 2..={levels}")]
    InvalidCut { cut: usize, levels: usize },
    #[error("outcome dichotomized at Y >= {cut} takes a single value")]
    DegenerateOutcome { cut: usize },
    #[error("{failed} of {total} resamples failed")]
    TooManyFailures { failed: usize, total: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl DoorError {
    /// True for failures of the numerical fitting step, as opposed to invalid input.
    pub fn is_fit_failure(&self) -> bool {
        matches!(
            self,
            DoorError::RankDeficient { .. }
                | DoorError::NonConvergence { .. }
                | DoorError::SingularInformation { .. }
                | DoorError::PositivityViolation { .. }
                | DoorError::DegenerateVariance
                | DoorError::TooManyFailures { .. }
        )
    }
}

pub type Result<T> = core::result::Result<T, DoorError>;
