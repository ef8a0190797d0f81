//! End-to-end orchestration: decode and resize images, build channel
//! planes, extract frequency features, train a classifier over a dataset
//! split, and score every test probe into an evaluation report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::baselines::{LdaBundle, PcaBundle};
use crate::classify::{argmax, ClassSamples, MapModel, DEFAULT_RIDGE_SCALE};
use crate::error::Error;
use crate::eval::{write_text_atomic, EvalReport, ScoreMatrix};
use crate::features::{
    build_fixed_mask_from_freqs, dct_decompose, select_features, FeatureVector, SelectionMode,
};
use crate::ingest::{load_image, resize, DatasetIndex};
use crate::plane::Plane;
use crate::preprocess::{prepare_channels, ChannelPlanes, ColorMode};

/// k values above this draw a warning: the selection stays valid but the
/// covariance grows quadratically and the discriminant gains little.
pub const K_WARN_LIMIT: usize = 99;

/// Baseline subspace dimension used when the caller passes m = 0 to a PCA
/// run (capped by the feature count and the training set size).
pub const DEFAULT_PCA_DIMS: usize = 40;

/// Everything that determines how an image becomes a feature vector, plus
/// the regularization policy for training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineParams {
    pub width: usize,
    pub height: usize,
    pub color_mode: ColorMode,
    pub k: usize,
    pub selection_mode: SelectionMode,
    pub equalize_chroma: bool,
    pub ridge_scale: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            width: 128,
            height: 128,
            color_mode: ColorMode::YCbCr,
            k: 64,
            selection_mode: SelectionMode::PerImageSort,
            equalize_chroma: false,
            ridge_scale: DEFAULT_RIDGE_SCALE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierKind {
    Map,
    Pca,
    Lda,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Map => "map",
            ClassifierKind::Pca => "pca",
            ClassifierKind::Lda => "lda",
        }
    }

    pub fn parse(s: &str) -> Option<ClassifierKind> {
        match s {
            "map" => Some(ClassifierKind::Map),
            "pca" => Some(ClassifierKind::Pca),
            "lda" => Some(ClassifierKind::Lda),
            _ => None,
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Decodes, resizes, and color-converts one image per the params.
pub fn planes_for_path(path: &Path, params: &PipelineParams) -> Result<ChannelPlanes, Error> {
    let img = load_image(path)?;
    let img = resize(&img, params.width, params.height)?;
    Ok(prepare_channels(
        &img,
        params.color_mode,
        params.equalize_chroma,
    )?)
}

/// One feature vector per channel plane, in the fixed (Y, Cb, Cr) order.
/// `masks` must hold one mask per channel when the selection mode is
/// fixed-mask, and is ignored otherwise.
pub fn features_for_planes(
    planes: &ChannelPlanes,
    params: &PipelineParams,
    masks: Option<&[Vec<usize>]>,
) -> Result<Vec<FeatureVector>, Error> {
    planes
        .planes()
        .iter()
        .enumerate()
        .map(|(ci, (channel, plane))| {
            let freq = dct_decompose(plane)?;
            let mask = masks.map(|m| m[ci].as_slice());
            Ok(select_features(
                &freq,
                params.k,
                params.selection_mode,
                mask,
                *channel,
            )?)
        })
        .collect()
}

pub fn features_for_path(
    path: &Path,
    params: &PipelineParams,
    masks: Option<&[Vec<usize>]>,
) -> Result<Vec<FeatureVector>, Error> {
    features_for_planes(&planes_for_path(path, params)?, params, masks)
}

/// Ranks frequency slots by mean coefficient magnitude over every training
/// plane, one mask per channel. Ranking the per-channel magnitude sum is
/// equivalent to ranking the mean, so only one accumulator plane per
/// channel is kept.
pub fn build_channel_masks(
    index: &DatasetIndex,
    params: &PipelineParams,
) -> Result<Vec<Vec<usize>>, Error> {
    let mut sums: Vec<Plane> = Vec::new();
    for class in &index.classes {
        for path in &class.train {
            let planes = planes_for_path(path, params)?;
            for (ci, (_, plane)) in planes.planes().iter().enumerate() {
                let freq = dct_decompose(plane)?;
                if sums.len() <= ci {
                    sums.push(Plane::zeros(freq.rows(), freq.cols()));
                }
                let acc = &mut sums[ci];
                let cols = freq.cols();
                for (i, v) in freq.iter().enumerate() {
                    let updated = acc.get(i / cols, i % cols) + v.abs();
                    acc.set(i / cols, i % cols, updated);
                }
            }
        }
    }
    sums.iter()
        .map(|sum| Ok(build_fixed_mask_from_freqs(std::slice::from_ref(sum), params.k)?))
        .collect()
}

/// Extracts features for every training image, grouped per class in index
/// order. Emits one warning when k exceeds the advisory limit.
pub fn collect_class_samples(
    index: &DatasetIndex,
    params: &PipelineParams,
    masks: Option<&[Vec<usize>]>,
) -> Result<Vec<ClassSamples>, Error> {
    if params.k > K_WARN_LIMIT {
        log::warn!(
            "k = {} exceeds the advisory limit of {K_WARN_LIMIT}; training cost grows as k^3",
            params.k
        );
    }
    index
        .classes
        .iter()
        .map(|class| {
            let samples = class
                .train
                .iter()
                .map(|path| features_for_path(path, params, masks))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ClassSamples {
                label: class.label.clone(),
                samples,
            })
        })
        .collect()
}

/// A fitted decision rule over the feature space.
pub enum TrainedClassifier {
    Map(MapModel),
    Pca(PcaBundle),
    Lda(LdaBundle),
}

impl TrainedClassifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedClassifier::Map(_) => ClassifierKind::Map,
            TrainedClassifier::Pca(_) => ClassifierKind::Pca,
            TrainedClassifier::Lda(_) => ClassifierKind::Lda,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            TrainedClassifier::Map(model) => model.labels(),
            TrainedClassifier::Pca(bundle) => bundle.labels.clone(),
            TrainedClassifier::Lda(bundle) => bundle.labels.clone(),
        }
    }

    pub fn scores(&self, features: &[FeatureVector]) -> Result<Vec<f64>, Error> {
        Ok(match self {
            TrainedClassifier::Map(model) => model.scores(features)?,
            TrainedClassifier::Pca(bundle) => bundle.scores(features)?,
            TrainedClassifier::Lda(bundle) => bundle.scores(features)?,
        })
    }
}

/// A classifier plus the feature-extraction configuration it was trained
/// under, which probes must replicate exactly.
pub struct TrainedPipeline {
    pub params: PipelineParams,
    pub masks: Option<Vec<Vec<usize>>>,
    pub classifier: TrainedClassifier,
}

impl TrainedPipeline {
    pub fn labels(&self) -> Vec<String> {
        self.classifier.labels()
    }

    pub fn features_for_path(&self, path: &Path) -> Result<Vec<FeatureVector>, Error> {
        features_for_path(path, &self.params, self.masks.as_deref())
    }

    pub fn scores_for_path(&self, path: &Path) -> Result<Vec<f64>, Error> {
        self.classifier.scores(&self.features_for_path(path)?)
    }
}

/// Trains the requested classifier on the index's training split. For the
/// subspace baselines, `m` is the target dimension; 0 selects an automatic
/// value (capped class count minus one for the discriminant subspace, a
/// fixed energy-oriented default for the principal components). The pooled
/// discriminant ignores `m`.
pub fn train_pipeline(
    index: &DatasetIndex,
    params: &PipelineParams,
    kind: ClassifierKind,
    m: usize,
) -> Result<TrainedPipeline, Error> {
    let masks = match params.selection_mode {
        SelectionMode::FixedMask => Some(build_channel_masks(index, params)?),
        SelectionMode::PerImageSort => None,
    };
    let samples = collect_class_samples(index, params, masks.as_deref())?;
    let classifier = match kind {
        ClassifierKind::Map => {
            TrainedClassifier::Map(MapModel::train(&samples, params.ridge_scale)?)
        }
        ClassifierKind::Pca => {
            let m_eff = if m == 0 {
                DEFAULT_PCA_DIMS.min(params.k).min(index.total_train())
            } else {
                m
            };
            TrainedClassifier::Pca(PcaBundle::fit(&samples, m_eff)?)
        }
        ClassifierKind::Lda => {
            TrainedClassifier::Lda(LdaBundle::fit(&samples, m, params.ridge_scale)?)
        }
    };
    Ok(TrainedPipeline {
        params: *params,
        masks,
        classifier,
    })
}

/// One evaluated probe, in deterministic probe order.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeDecision {
    pub path: PathBuf,
    pub true_index: usize,
    pub true_label: String,
    pub predicted_index: usize,
    pub predicted_label: String,
}

impl ProbeDecision {
    pub fn correct(&self) -> bool {
        self.true_index == self.predicted_index
    }
}

/// Full result of scoring a test split.
pub struct EvaluationOutcome {
    pub report: EvalReport,
    pub matrix: ScoreMatrix,
    pub decisions: Vec<ProbeDecision>,
    /// Wall-clock seconds spent extracting features and scoring probes.
    pub probe_seconds: f64,
}

/// Scores every test image of the index against the trained pipeline,
/// assembling probes in class order and file order within each class.
pub fn evaluate_pipeline(
    pipeline: &TrainedPipeline,
    index: &DatasetIndex,
) -> Result<EvaluationOutcome, Error> {
    let labels = pipeline.labels();
    let started = Instant::now();
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    let mut paths = Vec::new();
    for (class_index, class) in index.classes.iter().enumerate() {
        for path in &class.test {
            scores.push(pipeline.scores_for_path(path)?);
            truth.push(class_index);
            paths.push(path.clone());
        }
    }
    let probe_seconds = started.elapsed().as_secs_f64();

    let matrix = ScoreMatrix::new(scores, truth)?;
    let report = EvalReport::from_matrix(&matrix)?;
    let decisions = matrix
        .scores()
        .iter()
        .zip(matrix.truth())
        .zip(paths)
        .map(|((row, &true_index), path)| {
            let predicted_index = argmax(row);
            ProbeDecision {
                path,
                true_index,
                true_label: labels[true_index].clone(),
                predicted_index,
                predicted_label: labels[predicted_index].clone(),
            }
        })
        .collect();
    Ok(EvaluationOutcome {
        report,
        matrix,
        decisions,
        probe_seconds,
    })
}

/// decisions.csv: one row per probe with truth, prediction, and a 0/1
/// correctness flag. Paths are written as given by the dataset index.
pub fn write_decisions_csv(path: &Path, decisions: &[ProbeDecision]) -> Result<(), Error> {
    let mut out = String::from("probe,path,true_label,predicted_label,correct\n");
    for (i, d) in decisions.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i,
            d.path.display(),
            d.true_label,
            d.predicted_label,
            u8::from(d.correct())
        ));
    }
    Ok(write_text_atomic(path, &out)?)
}
