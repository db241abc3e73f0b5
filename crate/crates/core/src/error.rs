use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("required dataset file `{}` is missing", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on `{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("unparseable timestamp label `{0}`")]
    TimeLabel(String),

    #[error("row {row} has norm {norm:e}, cannot normalize a degenerate embedding")]
    DegenerateEmbedding { row: usize, norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("infeasible dataset request: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure during computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::MissingFile(_)
                | Error::InvalidGraph(_)
                | Error::TimeLabel(_)
                | Error::Config(_)
                | Error::Infeasible(_)
                | Error::Checkpoint(_)
        )
    }
}
