use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An IDX header or payload does not have the expected shape.
    #[error("IDX format error in `{field}`: {detail}")]
    Format { field: &'static str, detail: String },

    /// The payload is shorter than the header promises.
    #[error("IDX file truncated: header declares {declared} records, payload holds {available}")]
    Truncated { declared: usize, available: usize },

    /// Well-formed container, impossible contents (e.g. a label of 12).
    #[error("data error: {0}")]
    Data(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("build error: {0}")]
    Build(String),

    #[error("duplicate reference: {0}")]
    DuplicateReference(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("report parse error: {0}")]
    Report(String),
}

impl Error {
    /// Short, stable, greppable name of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Truncated { .. } => "truncated",
            Error::Data(_) => "data",
            Error::Lookup(_) => "lookup",
            Error::Config(_) => "config",
            Error::Build(_) => "build",
            Error::DuplicateReference(_) => "duplicate-reference",
            Error::Selection(_) => "selection",
            Error::Input(_) => "input",
            Error::Archive(_) => "archive",
            Error::Report(_) => "report",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
