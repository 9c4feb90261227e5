use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("simplification collapsed the polygon to {0} vertices")]
    DegenerateResult(usize),

    #[error("direction is undefined between identical points")]
    UndefinedDirection,

    #[error("scene has no containers")]
    EmptyScene,

    #[error("invalid label `{0}`")]
    InvalidLabel(String),

    #[error("container {0} has an unresolved label")]
    UnresolvedLabel(u32),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("delivery failed after {attempts} attempt(s): {last}")]
    Delivery { attempts: u32, last: String },

    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("fleiss kappa is undefined: all ratings fall in a single category")]
    UndefinedKappa,

    #[error("not enough eligible images for item `{item}`: need {needed}, have {available}")]
    Quota {
        item: String,
        needed: usize,
        available: usize,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("forbidden: {0}")]
    Forbidden(String),

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input files or arguments, as opposed to
    /// failures while doing the work.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGeometry(_)
                | Error::InvalidLabel(_)
                | Error::InvalidInput(_)
                | Error::Config(_)
                | Error::Schema { .. }
                | Error::EmptyScene
                | Error::DataIntegrity(_)
                | Error::Quota { .. }
                | Error::Json(_)
                | Error::Checkpoint(_)
                | Error::UnresolvedLabel(_)
        )
    }
}
