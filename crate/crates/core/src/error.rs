use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the toolkit.
///
/// The CLI maps [`Error::Config`] to exit code 2 and every other variant to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A value supplied as data was malformed or out of its domain.
    #[error("input error: {0}")]
    Input(String),

    /// A parameter or configuration value was outside its legal range.
    #[error("configuration error: {0}")]
    Config(String),

    /// The data carries no usable variation (constant trace, zero dispersion).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A file did not follow the expected schema.
    #[error("format error: {0}")]
    Format(String),

    /// A single row of a file could not be parsed.
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub(crate) fn ensure_finite<T: num_traits::Float>(x: T, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} must be finite")))
    }
}
