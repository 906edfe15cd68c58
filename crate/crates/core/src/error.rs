use std::path::PathBuf;

/// Errors surfaced by every stage of the pipeline.
///
/// Candidate-level outcomes (a kernel that fails to compile, crashes or prints
/// wrong values) are *not* errors; they are recorded in an `EvalResult`.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {detail}")]
    Parse { offset: usize, detail: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("arithmetic error: {0}")]
    Arithmetic(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("state error: {0}")]
    State(String),
    #[error("template error: missing binding for placeholder `{0}`")]
    Template(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("extraction error: {0}")]
    Extraction(String),
    #[error("environment error: {0}")]
    Environment(String),
    #[error("reference kernel failed: {0}")]
    Reference(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Transport failures are the only class the gateway retries.
    pub fn is_transient(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}
