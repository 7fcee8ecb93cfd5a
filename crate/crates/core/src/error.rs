use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("curves are defined on different grids")]
    GridMismatch,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("kernel is degenerate: every eigenvalue is below the retention floor")]
    DegenerateKernel,

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("predictor `{0}` is constant after centering")]
    DegeneratePredictor(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-positive weight {weight} for predictor {predictor}")]
    InvalidWeights { predictor: usize, weight: f64 },

    #[error("lambda_max is zero: the response is orthogonal to every predictor")]
    DegeneratePath,

    #[error("coordinate descent diverged during sweep {sweep}")]
    Divergence { sweep: usize },

    #[error("design is rank deficient (smallest singular value {smallest_singular_value:e})")]
    SingularDesign { smallest_singular_value: f64 },

    #[error("fold construction failed: {0}")]
    FoldConstruction(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("simulated signal has zero variance")]
    DegenerateSignal,

    #[error("replication {replication}: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
