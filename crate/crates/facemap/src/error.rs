//! One error type for whole-pipeline entry points. Every message is
//! prefixed with the stage that produced it so callers can report where a
//! run failed without unwrapping the chain.

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::classify::ClassifyError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::ingest::IngestError;
use crate::model_io::ModelIoError;
use crate::preprocess::PreprocessError;

#[derive(Error, Debug)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("preprocess: {0}")]
    Preprocess(#[from] PreprocessError),
    #[error("features: {0}")]
    Feature(#[from] FeatureError),
    #[error("classify: {0}")]
    Classify(#[from] ClassifyError),
    #[error("baselines: {0}")]
    Baseline(#[from] BaselineError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("model file: {0}")]
    ModelIo(#[from] ModelIoError),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// True for operating-system I/O failures (unwritable output, failed
    /// renames, disk errors). Bad inputs such as corrupt images, missing
    /// datasets, or invalid parameters are not I/O failures: they signal
    /// caller mistakes and map to a different exit code.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Ingest(IngestError::Io { .. })
                | Error::Eval(EvalError::Io { .. })
                | Error::ModelIo(ModelIoError::IoFailure { .. })
        )
    }
}
