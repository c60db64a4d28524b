use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}:{line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("{context}: duplicate key {key:?} (line {line})")]
    DuplicateKey {
        context: String,
        key: char,
        line: usize,
    },

    #[error("character {0:?} is not present in the table")]
    UnknownCharacter(char),

    #[error("characters missing from embedding table: {}", format_chars(.0))]
    MissingEmbeddings(Vec<char>),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("non-finite parameter after update at epoch {epoch}, batch {batch}")]
    NonFiniteParameter { epoch: usize, batch: usize },

    #[error("{context}: {message}")]
    Format { context: String, message: String },

    #[error("record {id:?}: {message}")]
    InvalidRecord { id: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn record(id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidRecord {
            id: id.into(),
            message: message.into(),
        }
    }
}

fn format_chars(chars: &[char]) -> String {
    chars.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

/// Parses a field that must hold exactly one Unicode scalar value.
pub(crate) fn single_char(field: &str) -> Option<char> {
    let mut it = field.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Some(c),
        _ => None,
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
