use thiserror::Error;

/// Failure modes shared by every estimator in the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular design: column `{column}` is linearly dependent on the preceding columns")]
    SingularDesign { column: String },

    #[error("perfect separation detected: coefficient `{column}` diverges")]
    Separation { column: String },

    #[error("unstable inverse-probability weights: minimum fitted probability {min_prob:.3e} among selected rows")]
    UnstableWeights { min_prob: f64 },

    #[error("too few usable observations: {have} available, at least {need} required")]
    TooFewObservations { have: usize, need: usize },

    #[error("unknown column `{name}`; available columns: {}", available.join(", "))]
    MissingColumn { name: String, available: Vec<String> },

    #[error("inconsistent data: {0}")]
    InvalidData(String),

    #[error("collinearity guard: {0}")]
    Collinearity(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
