use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An exponential overflowed; `coordinate` is the input coordinate whose
    /// factor pushed the value out of range (equal to the input dimension when
    /// the bias term alone overflows).
    #[error("value out of range at coordinate {coordinate}: {detail}")]
    Range { coordinate: usize, detail: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("kernel entry ({i}, {j}): {source}")]
    GramEntry {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("event {index} has zero intensity")]
    SingularEvent { index: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("intensity {value} exceeds dominating bound {bound} at {point:?}")]
    DominationViolation {
        value: f64,
        bound: f64,
        point: Vec<f64>,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite gradient at epoch {epoch}: {detail}")]
    NonFiniteGradient { epoch: usize, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}
