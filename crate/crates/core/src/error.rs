use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown scheme `{0}` (expected one of RADAU23, RADAU35, RADAU47, RADAU59, DIRK33, ESDIRK65)")]
    UnknownScheme(String),

    #[error("Radau IIA generator supports 1 <= s <= 9, got s = {0}")]
    StageCountOutOfRange(usize),

    #[error("root finder failed for Q_{stages}: residual {residual:e} after {iterations} iterations")]
    RootFinding {
        stages: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("Butcher matrix of `{0}` is singular")]
    SingularButcherMatrix(String),

    #[error("`{0}` has an explicit first stage; derive the implicit block instead")]
    ExplicitFirstStage(String),

    #[error("I - zA is singular at z = {re} + {im}i")]
    SingularStabilityMatrix { re: f64, im: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid partition count {partitions} for {elements} elements")]
    InvalidPartitionCount { partitions: usize, elements: usize },

    #[error("singular pivot block at element {element} (condition estimate {condition:e})")]
    SingularPivot { element: usize, condition: f64 },

    #[error("singular pivot block at stage {stage}, element {element} (condition estimate {condition:e})")]
    SingularStagePivot {
        stage: usize,
        element: usize,
        condition: f64,
    },

    #[error("operators do not share a block structure: {0}")]
    StructureMismatch(String),

    #[error("matrix text format: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scheme `{scheme}` is incompatible with {what}")]
    IncompatibleScheme { scheme: String, what: String },

    #[error("Newton did not converge in {iterations} iterations (residual history {history:?})")]
    NewtonDivergence {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("GMRES did not converge in {iterations} iterations (relative residual {relative_residual:e})")]
    LinearSolveFailed {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("mass matrix block {0} is not symmetric positive definite")]
    MassNotSpd(usize),
}
