use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("jet order {requested} exceeds the supported maximum {max}")]
    OrderUnsupported { requested: usize, max: usize },
    #[error("evaluation failed: {0}")]
    EvaluationFailure(String),
    #[error("expected {expected} coordinates, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("point lies on the zero section y = 0")]
    ZeroSection,
    #[error("fiber Hessian is singular (|det| = {0:e})")]
    SingularHessian(f64),
    #[error("metric is singular: {0}")]
    SingularMetric(String),
    #[error("vertical block is degenerate (|det| = {0:e})")]
    DegenerateVBlock(f64),
    #[error("inertia of the two quadratic forms differs")]
    SignatureMismatch,
    #[error("horizontal and vertical blocks differ by {0:e}; not a Sasaki lift")]
    NotSasaki(f64),
    #[error("conformal factor is not positive ({0:e})")]
    NonpositiveFactor(f64),
    #[error("wrong signature: {0}")]
    WrongSignature(String),
    #[error("wrong dimension: {0}")]
    WrongDimension(String),
    #[error("index role mismatch: {0}")]
    RoleMismatch(String),
    #[error("curvature lacks pair symmetries (residual {0:e})")]
    SymmetryViolation(f64),
    #[error("background is not conformally flat here (max |Psi| = {0:e})")]
    IncompatibleBackground(f64),
    #[error("pi vanishes; kinematics undefined")]
    ZeroPi,
    #[error("integration failed: {0}")]
    StepFailure(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("suite not applicable: {0}")]
    SuiteInapplicable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
