use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid stencil order a={order} (must satisfy 1 <= a <= {max})")]
    InvalidOrder { order: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("resource limit exceeded: {what} = {requested} > cap {cap}")]
    Resource {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("norm drift {drift:e} in segment {segment} exceeds {limit:e}")]
    Instability {
        segment: usize,
        drift: f64,
        limit: f64,
    },

    #[error("amplitude amplification residual {residual:e} exceeds envelope {limit:e}")]
    AmplificationFailure { residual: f64, limit: f64 },

    #[error("hypothesis violated: {assumption} ({detail})")]
    Hypothesis { assumption: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidOrder { .. } => "invalid_order",
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::Index(_) => "index",
            Error::Resource { .. } => "resource",
            Error::DegenerateState(_) => "degenerate_state",
            Error::Data(_) => "data",
            Error::ContractViolation(_) => "contract_violation",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::Instability { .. } => "instability",
            Error::AmplificationFailure { .. } => "amplification_failure",
            Error::Hypothesis { .. } => "hypothesis",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
