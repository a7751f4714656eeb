//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum YmhError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("point is off the manifold: |y| deviates from 1 by {deviation:.3e}")]
    OffManifold { deviation: f64 },

    #[error("no moment map registered for manifold kind `{0}`")]
    MissingMomentMap(String),

    #[error("no complex structure registered on the action spec")]
    MissingComplexStructure,

    #[error("gauge precondition violated: {0}")]
    GaugeViolation(String),

    #[error("ODE step failure: {0}")]
    OdeFailure(String),

    #[error("line search collapsed below {0:.3e}")]
    StepCollapse(f64),

    #[error("energy increased after line search (from {from:.6e} to {to:.6e})")]
    Divergence { from: f64, to: f64 },

    #[error("eigensolve failure: {0}")]
    EigenFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error("stage `{stage}` failed for member {member}: {source}")]
    StageFailure {
        stage: String,
        member: usize,
        #[source]
        source: Box<YmhError>,
    },

    #[error("i/o failure on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, YmhError>;
