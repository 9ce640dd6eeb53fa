use std::path::PathBuf;

/// Errors surfaced by the chipforge library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid box {0}")]
    InvalidBox(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed input {location}: {message}")]
    MalformedInput { location: String, message: String },

    #[error("unsupported manifest version {found:?} (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },

    #[error("record references unknown image {0}")]
    UnknownImage(u64),

    #[error("proposal {index} lies outside the chip frame")]
    ProposalOutsideChip { index: usize },

    #[error("instance too large for exhaustive search: {candidates} candidates, {boxes} boxes")]
    InstanceTooLarge { candidates: usize, boxes: usize },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn malformed(location: impl Into<String>, message: impl ToString) -> Self {
        Error::MalformedInput {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
