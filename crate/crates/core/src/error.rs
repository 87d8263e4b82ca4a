use thiserror::Error;

/// Errors raised across the inference toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite rate at t = {time}: {detail}")]
    NonFiniteRate { time: f64, detail: String },

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("weights do not sum to one (sum = {0})")]
    WeightSum(f64),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error(
        "the Poisson approximate likelihood needs analytic model structure \
         (transition kernel, immigration, observed flows) which this model does not provide; \
         the particle filter only needs a simulator and works on it"
    )]
    PalUnavailable,

    #[error("objective is not finite at the starting point ({0})")]
    NonFiniteStart(f64),

    #[error("iterated filtering collapsed at iteration {iteration}: all particle weights vanished at every time point")]
    MifCollapse {
        iteration: usize,
        trace: crate::mif::MifTrace,
    },

    #[error("ARMA: {0}")]
    Arma(String),

    #[error("degenerate series: {0}")]
    Degenerate(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteRate { .. }
                | Error::WeightSum(_)
                | Error::NonFiniteStart(_)
                | Error::MifCollapse { .. }
                | Error::Arma(_)
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
