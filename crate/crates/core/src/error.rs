use thiserror::Error;

pub type Result<T, E = PonError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PonError {
    #[error("{what} {value} is outside the valid interval [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid topology: {0}")]
    Structural(String),

    #[error("base loss {base_loss:.3} dB exceeds the {budget} budget of {max_loss:.3} dB by {shortfall:.3} dB")]
    Infeasible {
        budget: String,
        max_loss: f64,
        base_loss: f64,
        shortfall: f64,
    },

    #[error("element {index}: {source}")]
    Element {
        index: usize,
        #[source]
        source: Box<PonError>,
    },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("unit {unit_id} has no ORL value at {wavelength_nm} nm")]
    MissingWavelength { unit_id: String, wavelength_nm: u32 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PonError {
    pub(crate) fn at_element(self, index: usize) -> Self {
        PonError::Element {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PonError::InvalidArgument(msg.into())
    }
}
