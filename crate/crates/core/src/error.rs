//! Crate-wide error type.

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Text-format parse failure; `line` is 1-based within the input stream.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Invalid or inconsistent configuration; the message names the key.
    #[error("invalid config: {0}")]
    Config(String),

    /// Array or sequence lengths do not conform.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation that requires data received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Evaluation cannot produce a defined result.
    #[error("evaluation error: {0}")]
    Eval(String),

    /// The training loop produced a non-finite loss.
    #[error("training diverged at iteration {iter} (last finite loss {last_loss})")]
    Divergence { iter: usize, last_loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
