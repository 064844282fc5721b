use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// The variants map one-to-one onto the CLI exit codes (see
/// [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid shapes, parameters, geometry or configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A region or index falls outside the image.
    #[error("bounds error: {0}")]
    Bounds(String),

    /// An iterative solver diverged or failed to converge.
    #[error("solver error: {0}")]
    Solver(String),

    /// Malformed or truncated file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    /// Prefix the message with context, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Bounds(m) => Error::Bounds(format!("{ctx}: {m}")),
            Error::Solver(m) => Error::Solver(format!("{ctx}: {m}")),
            Error::Format { offset, message } => Error::Format {
                offset,
                message: format!("{ctx}: {message}"),
            },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }

    /// Process exit code: 2 config, 3 solver, 4 format.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Bounds(_) => 2,
            Error::Solver(_) => 3,
            Error::Format { .. } | Error::Io(_) => 4,
        }
    }
}
