//! PCA (eigenfaces) and LDA projections with Euclidean nearest-mean
//! matching, trained on the same DCT features as the MAP discriminant so
//! comparisons isolate the classifier.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::classify::{argmax, ClassSamples, RIDGE_FLOOR};
use crate::features::{Channel, FeatureVector};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("at least two classes are required")]
    TooFewClasses,
    #[error("no training samples")]
    EmptyTraining,
    #[error("vector dimension {got} does not match expected {want}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("target dimension m = {m} is out of range (max {max})")]
    BadTargetDimension { m: usize, max: usize },
    #[error("within-class scatter cannot be factorized even after regularization")]
    DegenerateScatter,
    #[error("probe is missing channel {0}")]
    MissingChannel(Channel),
}

/// Fisher discriminant projection for one channel.
///
/// Rows of `projection` are generalized eigenvectors e_i of the pencil
/// (S_b, S_w + eps I), scaled so e_i^T (S_w + eps I) e_i = 1, sorted by
/// descending eigenvalue. Both scatters are retained for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct LdaModel {
    pub projection: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub global_mean: DVector<f64>,
    pub class_means_projected: Vec<DVector<f64>>,
    pub between_scatter: DMatrix<f64>,
    pub within_scatter: DMatrix<f64>,
    pub epsilon: f64,
}

/// Principal-component projection for one channel. Rows of `components`
/// are orthonormal; eigenvalues are the variances along them, descending.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    pub components: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub class_means_projected: Vec<DVector<f64>>,
}

fn check_class_vectors(
    class_vectors: &[Vec<DVector<f64>>],
) -> Result<(usize, usize), BaselineError> {
    let k = class_vectors
        .iter()
        .flat_map(|c| c.iter())
        .next()
        .ok_or(BaselineError::EmptyTraining)?
        .len();
    let mut total = 0;
    for class in class_vectors {
        if class.is_empty() {
            return Err(BaselineError::EmptyTraining);
        }
        for x in class {
            if x.len() != k {
                return Err(BaselineError::DimensionMismatch {
                    want: k,
                    got: x.len(),
                });
            }
            total += 1;
        }
    }
    Ok((k, total))
}

/// Eigenvalues descending with matching eigenvector columns, values clamped
/// to be nonnegative (the pencils solved here are positive semidefinite, so
/// negative outputs are rounding noise).
fn sorted_symmetric_eigen(matrix: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = matrix.nrows();
    let symmetrized = (&matrix + matrix.transpose()) * 0.5;
    let eigen = symmetrized.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let values: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0))
        .collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors
            .column_mut(dst)
            .copy_from(&eigen.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Fits the Fisher projection. `m = 0` selects min(c - 1, k); an explicit m
/// must stay within that bound. The within-class scatter is ridged exactly
/// like the MAP model's pooled covariance, and the eigenproblem is solved
/// through its Cholesky factor so a symmetric solver applies.
pub fn fit_lda(
    class_vectors: &[Vec<DVector<f64>>],
    m: usize,
    ridge_scale: f64,
) -> Result<LdaModel, BaselineError> {
    let c = class_vectors.len();
    if c < 2 {
        return Err(BaselineError::TooFewClasses);
    }
    let (k, total) = check_class_vectors(class_vectors)?;
    let max_m = (c - 1).min(k);
    let m = if m == 0 { max_m } else { m };
    if m > max_m {
        return Err(BaselineError::BadTargetDimension { m, max: max_m });
    }

    let mut global_mean = DVector::zeros(k);
    let mut class_means = Vec::with_capacity(c);
    for class in class_vectors {
        let mut mean = DVector::zeros(k);
        for x in class {
            mean += x;
            global_mean += x;
        }
        mean /= class.len() as f64;
        class_means.push(mean);
    }
    global_mean /= total as f64;

    let mut within = DMatrix::zeros(k, k);
    for (class, mean) in class_vectors.iter().zip(&class_means) {
        for x in class {
            let centered = x - mean;
            within.ger(1.0, &centered, &centered, 1.0);
        }
    }
    let mut between = DMatrix::zeros(k, k);
    for (class, mean) in class_vectors.iter().zip(&class_means) {
        let centered = mean - &global_mean;
        between.ger(class.len() as f64, &centered, &centered, 1.0);
    }

    let epsilon = (ridge_scale * within.trace() / k as f64).max(RIDGE_FLOOR);
    let mut regularized = within.clone();
    for d in 0..k {
        regularized[(d, d)] += epsilon;
    }
    let chol = Cholesky::new(regularized).ok_or(BaselineError::DegenerateScatter)?;
    let l = chol.l();

    // A = L^{-1} S_b L^{-T} shares eigenvalues with the pencil (S_b, S_w+eps I);
    // its eigenvectors u map back through e = L^{-T} u, which gives
    // e^T (S_w + eps I) e = u^T u = 1.
    let half = l
        .solve_lower_triangular(&between)
        .ok_or(BaselineError::DegenerateScatter)?;
    let reduced = l
        .solve_lower_triangular(&half.transpose())
        .ok_or(BaselineError::DegenerateScatter)?
        .transpose();
    let (all_values, all_vectors) = sorted_symmetric_eigen(reduced);

    let u_top = all_vectors.columns(0, m).into_owned();
    let e_cols = l
        .transpose()
        .solve_upper_triangular(&u_top)
        .ok_or(BaselineError::DegenerateScatter)?;
    let projection = e_cols.transpose();
    let eigenvalues = all_values[..m].to_vec();

    let class_means_projected = class_means
        .iter()
        .map(|mu| &projection * (mu - &global_mean))
        .collect();

    Ok(LdaModel {
        projection,
        eigenvalues,
        global_mean,
        class_means_projected,
        between_scatter: between,
        within_scatter: within,
        epsilon,
    })
}

/// Projects a vector into the fitted Fisher space (centered on the global
/// mean; per-class centering would collapse every projected class mean to
/// zero and leave nothing to match against).
pub fn project_lda(model: &LdaModel, x: &DVector<f64>) -> Result<DVector<f64>, BaselineError> {
    if x.len() != model.global_mean.len() {
        return Err(BaselineError::DimensionMismatch {
            want: model.global_mean.len(),
            got: x.len(),
        });
    }
    Ok(&model.projection * (x - &model.global_mean))
}

/// Fits the principal-component projection on all samples pooled together.
/// `m = 0` keeps min(k, total samples) components.
pub fn fit_pca(class_vectors: &[Vec<DVector<f64>>], m: usize) -> Result<PcaModel, BaselineError> {
    let (k, total) = check_class_vectors(class_vectors)?;
    let max_m = k.min(total);
    let m = if m == 0 { max_m } else { m };
    if m > max_m {
        return Err(BaselineError::BadTargetDimension { m, max: max_m });
    }

    let mut mean = DVector::zeros(k);
    for class in class_vectors {
        for x in class {
            mean += x;
        }
    }
    mean /= total as f64;

    let mut covariance = DMatrix::zeros(k, k);
    for class in class_vectors {
        for x in class {
            let centered = x - &mean;
            covariance.ger(1.0, &centered, &centered, 1.0);
        }
    }
    if total > 1 {
        covariance /= (total - 1) as f64;
    }

    let (all_values, all_vectors) = sorted_symmetric_eigen(covariance);
    let components = all_vectors.columns(0, m).transpose().into_owned();
    let eigenvalues = all_values[..m].to_vec();

    let class_means_projected = class_vectors
        .iter()
        .map(|class| {
            let mut class_mean = DVector::zeros(k);
            for x in class {
                class_mean += x;
            }
            class_mean /= class.len() as f64;
            &components * (class_mean - &mean)
        })
        .collect();

    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
        class_means_projected,
    })
}

pub fn project_pca(model: &PcaModel, x: &DVector<f64>) -> Result<DVector<f64>, BaselineError> {
    if x.len() != model.mean.len() {
        return Err(BaselineError::DimensionMismatch {
            want: model.mean.len(),
            got: x.len(),
        });
    }
    Ok(&model.components * (x - &model.mean))
}

/// Maps a projected vector back to feature space; with all components
/// retained this inverts `project_pca` exactly up to rounding.
pub fn reconstruct_pca(model: &PcaModel, y: &DVector<f64>) -> Result<DVector<f64>, BaselineError> {
    if y.len() != model.components.nrows() {
        return Err(BaselineError::DimensionMismatch {
            want: model.components.nrows(),
            got: y.len(),
        });
    }
    Ok(&model.mean + model.components.transpose() * y)
}

/// Nearest class mean under Euclidean distance; scores are negated
/// distances so that higher means more similar, and ties go to the lowest
/// class index.
pub fn classify_euclidean(means: &[DVector<f64>], x: &DVector<f64>) -> (usize, Vec<f64>) {
    let scores: Vec<f64> = means.iter().map(|mu| -(x - mu).norm()).collect();
    (argmax(&scores), scores)
}

/// Training vectors regrouped as [channel][class][sample].
type ChannelClassVectors = Vec<Vec<Vec<DVector<f64>>>>;

/// Splits labeled per-channel training samples into one vector set per
/// channel, validating a consistent layout.
fn split_by_channel(
    classes: &[ClassSamples],
) -> Result<(Vec<Channel>, Vec<String>, ChannelClassVectors), BaselineError> {
    let first_sample = classes
        .first()
        .and_then(|c| c.samples.first())
        .ok_or(BaselineError::EmptyTraining)?;
    let channels: Vec<Channel> = first_sample.iter().map(|fv| fv.channel).collect();
    let labels: Vec<String> = classes.iter().map(|c| c.label.clone()).collect();
    let mut per_channel: ChannelClassVectors =
        channels.iter().map(|_| Vec::with_capacity(classes.len())).collect();
    for class in classes {
        for bucket in per_channel.iter_mut() {
            bucket.push(Vec::with_capacity(class.samples.len()));
        }
        for sample in &class.samples {
            if sample.len() != channels.len() {
                return Err(BaselineError::DimensionMismatch {
                    want: channels.len(),
                    got: sample.len(),
                });
            }
            for (ci, fv) in sample.iter().enumerate() {
                if fv.channel != channels[ci] {
                    return Err(BaselineError::MissingChannel(channels[ci]));
                }
                per_channel[ci]
                    .last_mut()
                    .expect("bucket pushed above")
                    .push(DVector::from_column_slice(&fv.values));
            }
        }
    }
    Ok((channels, labels, per_channel))
}

/// Per-channel PCA models sharing one label list; multichannel probes fuse
/// by averaging the per-channel negated distances.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBundle {
    pub channels: Vec<Channel>,
    pub labels: Vec<String>,
    pub models: Vec<PcaModel>,
}

impl PcaBundle {
    pub fn fit(classes: &[ClassSamples], m: usize) -> Result<PcaBundle, BaselineError> {
        let (channels, labels, per_channel) = split_by_channel(classes)?;
        let models = per_channel
            .iter()
            .map(|vectors| fit_pca(vectors, m))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PcaBundle {
            channels,
            labels,
            models,
        })
    }

    pub fn scores(&self, features: &[FeatureVector]) -> Result<Vec<f64>, BaselineError> {
        bundle_scores(&self.channels, features, |ci, x| {
            let projected = project_pca(&self.models[ci], x)?;
            Ok(classify_euclidean(&self.models[ci].class_means_projected, &projected).1)
        })
    }

    pub fn classify(&self, features: &[FeatureVector]) -> Result<(usize, Vec<f64>), BaselineError> {
        let scores = self.scores(features)?;
        Ok((argmax(&scores), scores))
    }
}

/// Per-channel LDA models sharing one label list; fusion as in `PcaBundle`.
#[derive(Clone, Debug, PartialEq)]
pub struct LdaBundle {
    pub channels: Vec<Channel>,
    pub labels: Vec<String>,
    pub models: Vec<LdaModel>,
}

impl LdaBundle {
    pub fn fit(
        classes: &[ClassSamples],
        m: usize,
        ridge_scale: f64,
    ) -> Result<LdaBundle, BaselineError> {
        let (channels, labels, per_channel) = split_by_channel(classes)?;
        let models = per_channel
            .iter()
            .map(|vectors| fit_lda(vectors, m, ridge_scale))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LdaBundle {
            channels,
            labels,
            models,
        })
    }

    pub fn scores(&self, features: &[FeatureVector]) -> Result<Vec<f64>, BaselineError> {
        bundle_scores(&self.channels, features, |ci, x| {
            let projected = project_lda(&self.models[ci], x)?;
            Ok(classify_euclidean(&self.models[ci].class_means_projected, &projected).1)
        })
    }

    pub fn classify(&self, features: &[FeatureVector]) -> Result<(usize, Vec<f64>), BaselineError> {
        let scores = self.scores(features)?;
        Ok((argmax(&scores), scores))
    }
}

fn bundle_scores(
    channels: &[Channel],
    features: &[FeatureVector],
    mut channel_scores: impl FnMut(usize, &DVector<f64>) -> Result<Vec<f64>, BaselineError>,
) -> Result<Vec<f64>, BaselineError> {
    let mut fused: Option<Vec<f64>> = None;
    for (ci, &channel) in channels.iter().enumerate() {
        let fv = features
            .iter()
            .find(|fv| fv.channel == channel)
            .ok_or(BaselineError::MissingChannel(channel))?;
        let x = DVector::from_column_slice(&fv.values);
        let scores = channel_scores(ci, &x)?;
        match fused.as_mut() {
            None => fused = Some(scores),
            Some(acc) => {
                for (a, s) in acc.iter_mut().zip(scores) {
                    *a += s;
                }
            }
        }
    }
    let mut fused = fused.ok_or(BaselineError::EmptyTraining)?;
    let n = channels.len() as f64;
    for s in &mut fused {
        *s /= n;
    }
    Ok(fused)
}
