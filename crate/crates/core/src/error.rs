use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the engine.
///
/// Variants split into two families: invalid input ([`Error::is_validation`])
/// and numerical failure of an otherwise valid computation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("precondition violated in {op}: {detail}")]
    Precondition { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("structure error: {0}")]
    Structure(String),

    #[error("non-finite value at point {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("diffusion factor is singular (condition estimate {condition:e})")]
    SingularDiffusion { condition: f64 },

    #[error("diffusion matrix is not positive semidefinite (most negative eigenvalue {min_eigenvalue:e})")]
    NonFactorizable { min_eigenvalue: f64 },

    #[error("pole: component {site} is zero")]
    Pole { site: usize },

    #[error("state blew up at step {step}")]
    BlowUp { step: usize },

    #[error("inversion failed: {0}")]
    Inversion(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeight(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain { op, detail: detail.into() }
    }

    pub(crate) fn precondition(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Precondition { op, detail: detail.into() }
    }

    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::Precondition { .. }
                | Error::Config(_)
                | Error::UnsupportedParameter(_)
                | Error::Structure(_)
        )
    }
}
