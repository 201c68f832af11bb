use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inverse depth {rho:e} is too close to zero (feature at infinity)")]
    FeatureAtInfinity { rho: f64 },
    #[error("stamp {stamp} is not newer than the previous stamp {previous}")]
    NonMonotonicStamp { stamp: f64, previous: f64 },
    #[error("IMU gap of {dt} s exceeds the {max} s bound")]
    StreamGap { dt: f64, max: f64 },
    #[error("point at depth {depth} is at or behind the camera")]
    BehindCamera { depth: f64 },
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
    #[error("empty transition sequence")]
    EmptyTransition,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("clone index {0} is not live")]
    UnknownClone(usize),
    #[error("facet is degenerate: {0}")]
    DegenerateFacet(&'static str),
    #[error("predicted range {0} is negative")]
    NegativeRange(f64),
    #[error("need at least 3 non-collinear points, got {0} usable")]
    NoFacet(usize),
    #[error("acceleration is not constant along the trajectory (deviation {0:e})")]
    NonConstantAcceleration(f64),
    #[error("insufficient rows: need {needed}, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
