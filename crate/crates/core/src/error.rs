use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid pressure law: {0}")]
    InvalidPressure(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("search window error: {0}")]
    Window(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("vacuum guard tripped: min density {min_density:.6e} <= {guard:.6e}")]
    Vacuum { min_density: f64, guard: f64 },

    #[error("step failure at t = {t:.6e}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
