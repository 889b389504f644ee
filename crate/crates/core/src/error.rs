use thiserror::Error;

/// Errors raised by the modelling, likelihood and optimization layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model spec, state or coefficient set is malformed or they disagree
    /// with each other in shape.
    #[error("specification error: {0}")]
    Specification(String),

    /// An argument is outside the domain of the operation (e.g. `ln` of a
    /// non-positive count).
    #[error("domain error: {0}")]
    Domain(String),

    /// The noise covariance is singular at a prepoint.
    #[error("degenerate metric: unit {unit} has zero diffusion ({detail})")]
    DegenerateMetric { unit: String, detail: String },

    /// The caller invoked an operation with unusable arguments.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// The data cannot identify the model (e.g. a unit that never changes).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Optimizer or run configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric input such as a noise draw is not finite.
    #[error("input error: {0}")]
    Input(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
