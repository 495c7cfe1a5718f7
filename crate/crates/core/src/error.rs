use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical error in trajectory {trajectory}: {detail}")]
    Numerical { trajectory: String, detail: String },

    #[error("transport error after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },

    #[error("parse error in {}:{line}: {detail}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
