use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailed { t: f64, reason: String },
    #[error("no positive direction: {0}")]
    NoDirection(String),
    #[error("block form failed: residual {residual:.3e}")]
    BlockFormFailed { residual: f64 },
    #[error("unresolved conjugate point near t = {t}")]
    UnresolvedConjugatePoint { t: f64 },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("oracle failed: {0}")]
    OracleFailed(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("realization failed after {iterations} iterations, residual {residual:.3e}")]
    RealizationFailed { iterations: usize, residual: f64 },
    #[error("not closed within horizon {horizon}")]
    NotClosed { horizon: f64 },
    #[error("chart failure: {0}")]
    ChartFailure(String),
    #[error("refine sampling: {0}")]
    RefineSampling(String),
    #[error("index not constant along loop: {0}")]
    IndexNotConstant(String),
    #[error("genericity failed after {0} rounds")]
    GenericityFailed(usize),
    #[error("model violation: {0}")]
    ModelViolation(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl Error {
    /// Numerical failures versus input errors, used for CLI exit codes.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidInput(_) | Error::InvalidScenario(_) | Error::Precondition(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
