use thiserror::Error;

/// Errors raised by the estimation library.
///
/// Each variant carries a stable numeric [`code`](Error::code) so front ends
/// can map failures without matching on message text.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension {requested} exceeds the limit of {limit} for {what}")]
    DimensionOverflow { what: &'static str, requested: usize, limit: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid factorization: {0}")]
    InvalidSpec(String),

    #[error("correlation {value} at index {index} is outside (-1, 1)")]
    RhoOutOfRange { index: usize, value: f64 },

    #[error("operation requires all factor dimensions equal to 2")]
    NotBinary,

    #[error("E'WE is numerically singular")]
    SingularWeight,

    #[error("expected Hessian is singular")]
    SingularHessian,

    #[error("QMLE did not converge within {iterations} iterations")]
    MaxIterationsExceeded { iterations: usize },

    #[error("variance matrix of the restriction is singular")]
    SingularVariance,

    #[error("over-identification weight matrix is singular (condition number {condition:e})")]
    SingularS { condition: f64 },

    #[error("delta-method direction is degenerate: {0}")]
    DegenerateDirection(&'static str),

    #[error("sample covariance matrix is singular")]
    SingularSampleCov,

    #[error("window of {window} observations is too short for {n} series")]
    WindowTooShort { window: usize, n: usize },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable identifier for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "not_positive_definite",
            Error::DimensionOverflow { .. } => "dimension_overflow",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::RhoOutOfRange { .. } => "rho_out_of_range",
            Error::NotBinary => "not_binary",
            Error::SingularWeight => "singular_weight",
            Error::SingularHessian => "singular_hessian",
            Error::MaxIterationsExceeded { .. } => "max_iterations_exceeded",
            Error::SingularVariance => "singular_variance",
            Error::SingularS { .. } => "singular_s",
            Error::DegenerateDirection(_) => "degenerate_direction",
            Error::SingularSampleCov => "singular_sample_cov",
            Error::WindowTooShort { .. } => "window_too_short",
            Error::InvalidPanel(_) => "invalid_panel",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io",
        }
    }

    /// True for failures caused by the input data rather than by the numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::InvalidSpec(_)
                | Error::InvalidPanel(_)
                | Error::InvalidConfig(_)
                | Error::RhoOutOfRange { .. }
                | Error::NotBinary
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
