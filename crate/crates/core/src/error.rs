use thiserror::Error;

use crate::data::DataError;
use crate::scoring::ScoreError;
use crate::verification::VerificationError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("too few samples: need {needed}, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("expected {expected} predictors, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("station {0} is unknown to the model")]
    UnknownStation(u32),
    #[error("training diverged at epoch {epoch}, batch {batch}: non-finite loss")]
    DivergedTraining { epoch: usize, batch: usize },
    #[error("non-finite likelihood during boosting")]
    NonFiniteLikelihood,
    #[error("parameter and gradient shapes differ ({params} vs {grads})")]
    ShapeMismatch { params: usize, grads: usize },
    #[error("model and dataset feature specifications differ")]
    FeatureMismatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("artifact format version {found} is not supported (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
