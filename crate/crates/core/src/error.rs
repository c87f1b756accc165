use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("LED and lens centre coincide")]
    ZeroDistance,
    #[error("total internal reflection (square-root argument {0})")]
    TotalInternalReflection(f64),
    #[error("refracted ray is parallel to the PD plane")]
    ParallelRay,
    #[error("refracted ray does not reach the PD plane")]
    RayMissesPlane,
    #[error("codewords are identical")]
    IdenticalCodewords,
    #[error("empty codebook")]
    EmptyCodebook,
    #[error("AR coefficient must satisfy |c1| < 1, got {0}")]
    UnstableAr(f64),
    #[error("polar angle {0} rad leaves no finite vertical focal length")]
    VerticalFocusDiverges(f64),
    #[error("target lies behind the receiver plane (cosine {0})")]
    BehindReceiver(f64),
    #[error("lens predictor failed: {0}")]
    Predictor(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
