use thiserror::Error;

/// Errors raised by mixture validation, the closed forms, and the reduction pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmrError {
    #[error("{}weights are not on the simplex ({reason})", at_component(*.index))]
    NonSimplexWeights { index: Option<usize>, reason: String },

    #[error("component {index}: covariance is not symmetric (relative gap {gap:e})")]
    AsymmetricCovariance { index: usize, gap: f64 },

    #[error("{}covariance is not positive definite", at_component(*.index))]
    NotPositiveDefinite { index: Option<usize> },

    #[error("{}dimension mismatch (expected {expected}, found {found})", at_component(*.index))]
    DimensionMismatch {
        index: Option<usize>,
        expected: usize,
        found: usize,
    },

    #[error("component {index}: non-finite value in {field}")]
    NonFinite { index: usize, field: &'static str },

    #[error("mixture has no components")]
    EmptyMixture,

    #[error("target component count {target} must lie in 1..={available}")]
    InvalidTarget { target: usize, available: usize },

    #[error("operation supports dimension 1 only (found {0})")]
    UnsupportedDimension(usize),

    #[error("reference density underflows at x = {x} where the source density is {mass:e}")]
    SupportUnderflow { x: f64, mass: f64 },

    #[error("objective is not finite (parameter block: {block})")]
    NonFiniteObjective { block: String },

    #[error("invalid initial mixture: {0}")]
    InvalidInit(String),

    #[error("measure `{0}` has no closed form and cannot be used here")]
    NotClosedForm(&'static str),

    #[error("unknown measure `{0}` (expected one of ncp, ise, nise, cs, kl)")]
    UnknownMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

fn at_component(index: Option<usize>) -> String {
    index.map(|i| format!("component {i}: ")).unwrap_or_default()
}

impl GmrError {
    /// Attaches a component index to errors raised by index-free helpers.
    pub fn at(self, index: usize) -> Self {
        match self {
            GmrError::NotPositiveDefinite { index: None } => GmrError::NotPositiveDefinite {
                index: Some(index),
            },
            GmrError::DimensionMismatch {
                index: None,
                expected,
                found,
            } => GmrError::DimensionMismatch {
                index: Some(index),
                expected,
                found,
            },
            other => other,
        }
    }

    pub fn is_dimension_error(&self) -> bool {
        matches!(
            self,
            GmrError::DimensionMismatch { .. } | GmrError::UnsupportedDimension(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, GmrError>;
