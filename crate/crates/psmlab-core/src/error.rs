use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is singular or not positive definite (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    NotSymmetric { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} rows, got {got}")]
    InsufficientRows { needed: usize, got: usize },

    #[error("vector has (near) zero norm")]
    ZeroVector,

    #[error("no coefficient pair accepted after {attempts} attempts")]
    RejectionLimitExceeded { attempts: usize },

    #[error("every unit received the same treatment")]
    DegenerateTreatment,

    #[error("perfect or quasi-perfect separation: |linear predictor| exceeded {threshold}")]
    SeparationDetected { threshold: f64 },

    #[error("only one treatment class present")]
    OneClassOnly,

    #[error("no matched pairs formed within the caliper")]
    NoPairsFormed,

    #[error("covariate {covariate} has zero variance in both groups but unequal means")]
    ZeroVariance { covariate: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("too few matched pairs ({pairs}) for a model with {params} parameters")]
    TooFewPairs { pairs: usize, params: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid scenario configuration: {0}")]
    ConfigInvalid(String),
}
