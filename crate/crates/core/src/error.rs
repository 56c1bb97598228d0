use std::path::PathBuf;

use crate::dataset::DatasetError;
use crate::nn::checkpoint::CheckpointError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("invalid latent distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dataset too small: {got} records, at least {min} required")]
    DatasetTooSmall { got: usize, min: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
