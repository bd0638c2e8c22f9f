use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A circuit references a mode that does not exist, reuses a mode, or
    /// cannot be ordered.
    #[error("topology error: {0}")]
    Topology(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Postselection on a detector that the photon cannot reach.
    #[error("postselection on {detector} has zero probability")]
    UndefinedPostselection { detector: String },

    #[error("unknown detector {0}")]
    UnknownDetector(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Topology(_) | Error::Config(_) | Error::Parse(_) | Error::Json(_) => 2,
            Error::UnknownDetector(_) => 2,
            Error::UndefinedPostselection { .. } => 3,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
