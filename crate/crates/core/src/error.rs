use thiserror::Error;

/// Errors raised by the generalized-coordinate routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("order {order} exceeds the supported maximum of {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("operation needs a generalized point of order at least 1")]
    ZeroOrder,

    #[error("kernel provides derivatives up to order {available}, but order {requested} was requested")]
    InsufficientKernelOrder { requested: usize, available: usize },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("lag {lag} lies outside the series radius {radius}")]
    OutsideSeriesRadius { lag: f64, radius: f64 },

    #[error("covariance is numerically degenerate: Cholesky failed after maximum jitter")]
    DegenerateCovariance,

    #[error("covariance is singular")]
    SingularCovariance,

    #[error("covariance is not symmetric positive semi-definite")]
    InvalidCovariance,

    #[error("series has zero variance")]
    ZeroVarianceSeries,

    #[error("series too short: need at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("unsupported expression: {0}")]
    UnsupportedOperation(String),

    #[error("model has no observation map")]
    NoObservationModel,

    #[error("zigzag overflow at order {order}")]
    ZigzagOverflow { order: usize },

    #[error("energy Hessian is singular")]
    SingularHessian,

    #[error("log-determinant of the energy Hessian is undefined (det <= 0)")]
    OutsideLaplaceDomain,

    #[error("not enough samples: index {index} needs {needed} samples of history")]
    NotEnoughSamples { index: usize, needed: usize },

    #[error("embedding failed: interpolation matrix is singular")]
    EmbeddingFailure,

    #[error("step too large: lambda * dt = {product} exceeds the guard {limit}")]
    StepTooLarge { product: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
