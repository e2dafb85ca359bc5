use std::io;

use thiserror::Error;

use crate::world::Task;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("object `{object}` does not afford task `{task}`")]
    NotAfforded { object: String, task: Task },

    #[error("unknown task label `{0}`")]
    UnknownTask(String),

    #[error("unknown object `{0}`")]
    UnknownObject(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("signature bin counts differ: {left} vs {right}")]
    MismatchedBins { left: usize, right: usize },

    #[error("task record for `{0}` holds no successful outcomes")]
    EmptyOutcomes(Task),

    #[error("task record for `{0}` holds no ranked transforms")]
    EmptyTransforms(Task),

    #[error("threshold calibration needs both successful and undesired samples")]
    SingleClass,

    #[error("library has no record for task `{0}`")]
    MissingTask(Task),

    #[error("unsupported library version `{0}`")]
    UnsupportedVersion(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Csv(_))
    }
}
