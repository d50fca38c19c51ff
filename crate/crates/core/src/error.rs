use thiserror::Error;

/// Errors produced across the crate.
///
/// `Parse`, `Validation`, `Input` and `Config` indicate a problem with the
/// caller's data or settings; `Fit` and `Degenerate` indicate that a
/// computation could not be carried out on otherwise well-formed input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("validation error (row {row}): {msg}")]
    Validation { row: u64, msg: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad user input rather than runtime failure.
    /// The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation { .. } | Error::Input(_) | Error::Config(_)
        )
    }
}
