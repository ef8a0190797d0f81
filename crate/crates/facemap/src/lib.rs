//! Face recognition on frequency-domain features.
//!
//! The pipeline decodes a directory of face images, converts each to
//! luma or luma plus chroma planes with histogram equalization, takes an
//! orthonormal cosine transform of every plane, keeps the k strongest
//! coefficients, and classifies with a pooled-covariance discriminant
//! that fuses the per-channel scores. New classes enroll by folding their
//! scatter into the pooled covariance, with no retraining pass over the
//! existing classes. Linear-subspace baselines, rank/ROC metrics, a
//! versioned model file, and a synthetic corpus generator round out the
//! toolkit.

pub mod baselines;
pub mod classify;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model_io;
pub mod pipeline;
pub mod plane;
pub mod preprocess;
pub mod synth;

pub use baselines::{classify_euclidean, fit_lda, fit_pca, LdaBundle, LdaModel, PcaBundle, PcaModel};
pub use classify::{ClassSamples, ClassStatistics, EnrolledClass, MapModel};
pub use error::Error;
pub use eval::{cms, roc_eer, EvalReport, RocPoint, ScoreMatrix};
pub use features::{Channel, FeatureVector, FrequencyMatrix, SelectionMode};
pub use ingest::{DatasetIndex, RgbImage, SplitSpec};
pub use model_io::{load_model, save_model};
pub use pipeline::{
    evaluate_pipeline, train_pipeline, ClassifierKind, EvaluationOutcome, PipelineParams,
    ProbeDecision, TrainedClassifier, TrainedPipeline,
};
pub use plane::Plane;
pub use preprocess::{ChannelPlanes, ColorMode};
