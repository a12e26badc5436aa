use thiserror::Error;

/// Errors surfaced by the untangling pipeline.
///
/// The variants map one-to-one onto the CLI exit-code taxonomy, so keep
/// them coarse: callers branch on the category, not on the message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at diff line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("protocol error: {message}")]
    Protocol { message: String, raw: String },

    #[error("scripted backend: {0}")]
    Scripted(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("conflicting edits: {0}")]
    Conflict(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn protocol(message: impl Into<String>, raw: impl Into<String>) -> Self {
        Error::Protocol {
            message: message.into(),
            raw: raw.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
