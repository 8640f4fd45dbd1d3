use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdrnError>;

#[derive(Debug, Error)]
pub enum SdrnError {
    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("basis enumeration would produce {count} functions, above the cap of {cap}")]
    TooManyBasisFunctions { count: u128, cap: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid basis id: {0}")]
    InvalidBasisId(String),

    #[error(
        "quadrature did not converge: order {order} gave {coarse}, order {fine} gave {refined}"
    )]
    NonConvergence {
        order: usize,
        fine: usize,
        coarse: f64,
        refined: f64,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("logistic loss needs labels in {{0, 1}}, got {0}")]
    InvalidLabel(f64),

    #[error("invalid loss specification `{0}` (expected quadratic | huber:<delta> | quantile:<tau> | logistic)")]
    InvalidLoss(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("covariate column {column} is constant and cannot be scaled")]
    ConstantColumn { column: usize },

    #[error("objective became non-finite at step {step} (last finite value {last_finite})")]
    NonFiniteObjective { step: usize, last_finite: f64 },

    #[error("unsupported model schema version {found} (this build reads {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("data error: {0}")]
    Data(String),

    #[error("fit failed for kappa={kappa}, c={c}, replication {rep}: {source}")]
    Replication {
        kappa: f64,
        c: i32,
        rep: usize,
        #[source]
        source: Box<SdrnError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
