//! Pooled-covariance MAP discriminant.
//!
//! Every class is modeled as a Gaussian sharing one covariance, estimated
//! as the pooled within-class scatter C_g: the sum over classes of
//! sum_j (x_j - mu_i)(x_j - mu_i)^T, kept unnormalized. With equal priors
//! the posterior argmax reduces to the linear score
//! g_i(x) = mu_i^T C^{-1} x - (1/2) mu_i^T C^{-1} mu_i,
//! where C is C_g with a small trace-scaled ridge on the diagonal. In
//! ycbcr mode the decision maximizes the arithmetic mean of the per-channel
//! scores. Because C_g is a plain sum of per-class scatters, enrolling a
//! new class adds one scatter term and refreshes the factorization without
//! touching any earlier class.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::features::{Channel, FeatureVector, SelectionMode};
use crate::preprocess::ColorMode;

/// Ridge coefficient: epsilon = max(ridge_scale * trace(C_g) / k, floor).
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;
pub const RIDGE_FLOOR: f64 = 1e-10;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("no training classes")]
    EmptyTraining,
    #[error("class {label} has no samples")]
    EmptyClass { label: String },
    #[error("duplicate class label: {label}")]
    DuplicateLabel { label: String },
    #[error("feature dimension {got} does not match k = {want}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("sample channel layout does not match the model's channel set")]
    ChannelMismatch,
    #[error("selection mode or mask does not match the model")]
    SelectionMismatch,
    #[error("probe is missing channel {0}")]
    MissingChannel(Channel),
    #[error("class index {index} out of range for {count} classes")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("pooled covariance cannot be factorized even after regularization")]
    DegenerateCovariance,
}

/// Training input for one class: each sample holds one FeatureVector per
/// active channel, in (Y, Cb, Cr) order.
#[derive(Clone, Debug)]
pub struct ClassSamples {
    pub label: String,
    pub samples: Vec<Vec<FeatureVector>>,
}

/// Per-class sufficient statistics. Means and scatters are parallel to the
/// channel list they were computed for.
#[derive(Clone, Debug)]
pub struct ClassStatistics {
    pub label: String,
    pub count: usize,
    pub means: Vec<DVector<f64>>,
    /// Unnormalized centered scatter sum_j (x_j - mu)(x_j - mu)^T; zero for
    /// a single-sample class.
    pub scatters: Vec<DMatrix<f64>>,
}

/// An enrolled class inside a model: only what queries need.
#[derive(Clone, Debug, PartialEq)]
pub struct EnrolledClass {
    pub label: String,
    pub count: usize,
    pub means: Vec<DVector<f64>>,
}

/// Per-channel query state derived from (C_g + eps I).
#[derive(Clone, Debug)]
struct ChannelFactor {
    epsilon: f64,
    /// Row i holds w_i = (C_g + eps I)^{-1} mu_i.
    weights: DMatrix<f64>,
    /// Entry i holds -(1/2) mu_i . w_i.
    biases: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct MapModel {
    channels: Vec<Channel>,
    color_mode: ColorMode,
    selection_mode: SelectionMode,
    masks: Option<Vec<Vec<usize>>>,
    k: usize,
    ridge_scale: f64,
    classes: Vec<EnrolledClass>,
    pooled: Vec<DMatrix<f64>>,
    factors: Vec<ChannelFactor>,
}

pub(crate) fn channels_for(mode: ColorMode) -> Vec<Channel> {
    match mode {
        ColorMode::Gray => vec![Channel::Y],
        ColorMode::YCbCr => vec![Channel::Y, Channel::Cb, Channel::Cr],
    }
}

/// Computes the sufficient statistics of one class against an expected
/// layout (channel order, selection mode, dimension, masks).
pub fn class_statistics(
    class: &ClassSamples,
    channels: &[Channel],
    selection_mode: SelectionMode,
    k: usize,
    masks: Option<&[Vec<usize>]>,
) -> Result<ClassStatistics, ClassifyError> {
    if class.samples.is_empty() {
        return Err(ClassifyError::EmptyClass {
            label: class.label.clone(),
        });
    }
    for sample in &class.samples {
        validate_sample(sample, channels, selection_mode, k, masks)?;
    }
    let m = class.samples.len();
    let mut means = Vec::with_capacity(channels.len());
    let mut scatters = Vec::with_capacity(channels.len());
    for ci in 0..channels.len() {
        let mut mean = DVector::zeros(k);
        for sample in &class.samples {
            mean += DVector::from_column_slice(&sample[ci].values);
        }
        mean /= m as f64;
        let mut scatter = DMatrix::zeros(k, k);
        for sample in &class.samples {
            let centered = DVector::from_column_slice(&sample[ci].values) - &mean;
            scatter.ger(1.0, &centered, &centered, 1.0);
        }
        means.push(mean);
        scatters.push(scatter);
    }
    Ok(ClassStatistics {
        label: class.label.clone(),
        count: m,
        means,
        scatters,
    })
}

fn validate_sample(
    sample: &[FeatureVector],
    channels: &[Channel],
    selection_mode: SelectionMode,
    k: usize,
    masks: Option<&[Vec<usize>]>,
) -> Result<(), ClassifyError> {
    if sample.len() != channels.len() {
        return Err(ClassifyError::ChannelMismatch);
    }
    for (ci, fv) in sample.iter().enumerate() {
        if fv.channel != channels[ci] {
            return Err(ClassifyError::ChannelMismatch);
        }
        if fv.values.len() != k {
            return Err(ClassifyError::DimensionMismatch {
                want: k,
                got: fv.values.len(),
            });
        }
        if fv.selection_mode != selection_mode {
            return Err(ClassifyError::SelectionMismatch);
        }
        let expected_mask = masks.map(|m| m[ci].as_slice());
        if fv.mask.as_deref() != expected_mask {
            return Err(ClassifyError::SelectionMismatch);
        }
    }
    Ok(())
}

impl MapModel {
    /// Trains from per-class samples. The channel layout, selection mode,
    /// dimension, and masks are inferred from the first sample and enforced
    /// on every other one.
    pub fn train(classes: &[ClassSamples], ridge_scale: f64) -> Result<MapModel, ClassifyError> {
        let first_class = classes.first().ok_or(ClassifyError::EmptyTraining)?;
        let first_sample = first_class
            .samples
            .first()
            .ok_or_else(|| ClassifyError::EmptyClass {
                label: first_class.label.clone(),
            })?;
        let channels: Vec<Channel> = first_sample.iter().map(|fv| fv.channel).collect();
        let color_mode = match channels.as_slice() {
            [Channel::Y] => ColorMode::Gray,
            [Channel::Y, Channel::Cb, Channel::Cr] => ColorMode::YCbCr,
            _ => return Err(ClassifyError::ChannelMismatch),
        };
        let selection_mode = first_sample[0].selection_mode;
        let k = first_sample[0].values.len();
        if k == 0 {
            return Err(ClassifyError::DimensionMismatch { want: 1, got: 0 });
        }
        let masks = match selection_mode {
            SelectionMode::PerImageSort => None,
            SelectionMode::FixedMask => {
                let per_channel: Option<Vec<Vec<usize>>> =
                    first_sample.iter().map(|fv| fv.mask.clone()).collect();
                Some(per_channel.ok_or(ClassifyError::SelectionMismatch)?)
            }
        };

        let mut enrolled = Vec::with_capacity(classes.len());
        let mut pooled: Vec<DMatrix<f64>> =
            channels.iter().map(|_| DMatrix::zeros(k, k)).collect();
        for class in classes {
            if enrolled.iter().any(|e: &EnrolledClass| e.label == class.label) {
                return Err(ClassifyError::DuplicateLabel {
                    label: class.label.clone(),
                });
            }
            let stats =
                class_statistics(class, &channels, selection_mode, k, masks.as_deref())?;
            for (acc, scatter) in pooled.iter_mut().zip(&stats.scatters) {
                *acc += scatter;
            }
            enrolled.push(EnrolledClass {
                label: stats.label,
                count: stats.count,
                means: stats.means,
            });
        }

        let mut model = MapModel {
            channels,
            color_mode,
            selection_mode,
            masks,
            k,
            ridge_scale,
            classes: enrolled,
            pooled,
            factors: Vec::new(),
        };
        model.refactor()?;
        Ok(model)
    }

    /// Rebuilds a model from stored parts (deserialization, tests). The
    /// factorization is recomputed; everything else is taken as-is after
    /// validation.
    pub fn from_parts(
        color_mode: ColorMode,
        selection_mode: SelectionMode,
        k: usize,
        ridge_scale: f64,
        masks: Option<Vec<Vec<usize>>>,
        classes: Vec<EnrolledClass>,
        pooled: Vec<DMatrix<f64>>,
    ) -> Result<MapModel, ClassifyError> {
        let channels = channels_for(color_mode);
        if classes.is_empty() {
            return Err(ClassifyError::EmptyTraining);
        }
        for (i, class) in classes.iter().enumerate() {
            if classes[..i].iter().any(|c| c.label == class.label) {
                return Err(ClassifyError::DuplicateLabel {
                    label: class.label.clone(),
                });
            }
            if class.means.len() != channels.len() {
                return Err(ClassifyError::ChannelMismatch);
            }
            for mean in &class.means {
                if mean.len() != k {
                    return Err(ClassifyError::DimensionMismatch {
                        want: k,
                        got: mean.len(),
                    });
                }
            }
        }
        if pooled.len() != channels.len() {
            return Err(ClassifyError::ChannelMismatch);
        }
        for matrix in &pooled {
            if matrix.nrows() != k || matrix.ncols() != k {
                return Err(ClassifyError::DimensionMismatch {
                    want: k,
                    got: matrix.nrows(),
                });
            }
        }
        match (selection_mode, &masks) {
            (SelectionMode::PerImageSort, None) => {}
            (SelectionMode::FixedMask, Some(per_channel)) => {
                if per_channel.len() != channels.len() {
                    return Err(ClassifyError::ChannelMismatch);
                }
                if per_channel.iter().any(|m| m.len() != k) {
                    return Err(ClassifyError::SelectionMismatch);
                }
            }
            _ => return Err(ClassifyError::SelectionMismatch),
        }
        let mut model = MapModel {
            channels,
            color_mode,
            selection_mode,
            masks,
            k,
            ridge_scale,
            classes,
            pooled,
            factors: Vec::new(),
        };
        model.refactor()?;
        Ok(model)
    }

    /// Enrolls one new class: appends its statistics, adds its scatter to
    /// the pooled covariance, and refreshes the factorization. No existing
    /// class statistic is recomputed.
    pub fn add_class(&mut self, class: &ClassSamples) -> Result<(), ClassifyError> {
        if self.classes.iter().any(|e| e.label == class.label) {
            return Err(ClassifyError::DuplicateLabel {
                label: class.label.clone(),
            });
        }
        let stats = class_statistics(
            class,
            &self.channels,
            self.selection_mode,
            self.k,
            self.masks.as_deref(),
        )?;
        for (acc, scatter) in self.pooled.iter_mut().zip(&stats.scatters) {
            *acc += scatter;
        }
        self.classes.push(EnrolledClass {
            label: stats.label,
            count: stats.count,
            means: stats.means,
        });
        self.refactor()
    }

    /// Recomputes per-channel epsilon, Cholesky of (C_g + eps I), and the
    /// per-class weights and biases.
    fn refactor(&mut self) -> Result<(), ClassifyError> {
        let c = self.classes.len();
        let mut factors = Vec::with_capacity(self.channels.len());
        for (ci, pooled) in self.pooled.iter().enumerate() {
            let epsilon = (self.ridge_scale * pooled.trace() / self.k as f64).max(RIDGE_FLOOR);
            let mut regularized = pooled.clone();
            for d in 0..self.k {
                regularized[(d, d)] += epsilon;
            }
            let chol =
                Cholesky::new(regularized).ok_or(ClassifyError::DegenerateCovariance)?;
            let mut weights = DMatrix::zeros(c, self.k);
            let mut biases = DVector::zeros(c);
            for (i, class) in self.classes.iter().enumerate() {
                let w = chol.solve(&class.means[ci]);
                biases[i] = -0.5 * class.means[ci].dot(&w);
                weights.row_mut(i).copy_from(&w.transpose());
            }
            factors.push(ChannelFactor {
                epsilon,
                weights,
                biases,
            });
        }
        self.factors = factors;
        Ok(())
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn color_mode(&self) -> ColorMode {
        self.color_mode
    }

    pub fn selection_mode(&self) -> SelectionMode {
        self.selection_mode
    }

    pub fn masks(&self) -> Option<&[Vec<usize>]> {
        self.masks.as_deref()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ridge_scale(&self) -> f64 {
        self.ridge_scale
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[EnrolledClass] {
        &self.classes
    }

    pub fn labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }

    /// The pooled scatter C_g of one channel, exactly as accumulated.
    pub fn pooled_scatter(&self, channel: Channel) -> Result<&DMatrix<f64>, ClassifyError> {
        Ok(&self.pooled[self.channel_pos(channel)?])
    }

    /// The effective ridge added to one channel's pooled scatter.
    pub fn epsilon(&self, channel: Channel) -> Result<f64, ClassifyError> {
        Ok(self.factors[self.channel_pos(channel)?].epsilon)
    }

    fn channel_pos(&self, channel: Channel) -> Result<usize, ClassifyError> {
        self.channels
            .iter()
            .position(|&c| c == channel)
            .ok_or(ClassifyError::MissingChannel(channel))
    }

    fn validate_probe(&self, x: &FeatureVector, pos: usize) -> Result<(), ClassifyError> {
        if x.channel != self.channels[pos] {
            return Err(ClassifyError::ChannelMismatch);
        }
        if x.values.len() != self.k {
            return Err(ClassifyError::DimensionMismatch {
                want: self.k,
                got: x.values.len(),
            });
        }
        if x.selection_mode != self.selection_mode {
            return Err(ClassifyError::SelectionMismatch);
        }
        let expected_mask = self.masks.as_deref().map(|m| m[pos].as_slice());
        if x.mask.as_deref() != expected_mask {
            return Err(ClassifyError::SelectionMismatch);
        }
        Ok(())
    }

    /// g_i(x) for one class on one channel.
    pub fn discriminant(
        &self,
        x: &FeatureVector,
        class_index: usize,
        channel: Channel,
    ) -> Result<f64, ClassifyError> {
        if class_index >= self.classes.len() {
            return Err(ClassifyError::IndexOutOfRange {
                index: class_index,
                count: self.classes.len(),
            });
        }
        let pos = self.channel_pos(channel)?;
        self.validate_probe(x, pos)?;
        let factor = &self.factors[pos];
        let dot: f64 = factor
            .weights
            .row(class_index)
            .iter()
            .zip(&x.values)
            .map(|(w, v)| w * v)
            .sum();
        Ok(dot + factor.biases[class_index])
    }

    /// All class scores on one channel.
    pub fn scores_channel(
        &self,
        x: &FeatureVector,
        channel: Channel,
    ) -> Result<Vec<f64>, ClassifyError> {
        let pos = self.channel_pos(channel)?;
        self.validate_probe(x, pos)?;
        let factor = &self.factors[pos];
        let xv = DVector::from_column_slice(&x.values);
        let scores = &factor.weights * xv + &factor.biases;
        Ok(scores.iter().copied().collect())
    }

    /// Argmax decision on one channel; ties go to the lowest class index.
    pub fn classify_channel(
        &self,
        x: &FeatureVector,
        channel: Channel,
    ) -> Result<(usize, Vec<f64>), ClassifyError> {
        let scores = self.scores_channel(x, channel)?;
        Ok((argmax(&scores), scores))
    }

    /// Mean of the per-channel scores over the model's channel set. For a
    /// probe the caller supplies one FeatureVector per model channel, in
    /// any order; gray models use Y alone, so this equals the Y scores.
    pub fn scores(&self, features: &[FeatureVector]) -> Result<Vec<f64>, ClassifyError> {
        let mut fused = vec![0.0; self.classes.len()];
        for &channel in &self.channels {
            let fv = features
                .iter()
                .find(|fv| fv.channel == channel)
                .ok_or(ClassifyError::MissingChannel(channel))?;
            for (acc, s) in fused.iter_mut().zip(self.scores_channel(fv, channel)?) {
                *acc += s;
            }
        }
        let n = self.channels.len() as f64;
        for s in &mut fused {
            *s /= n;
        }
        Ok(fused)
    }

    /// Decision over the model's full channel set (fused in ycbcr mode).
    pub fn classify(&self, features: &[FeatureVector]) -> Result<(usize, Vec<f64>), ClassifyError> {
        let scores = self.scores(features)?;
        Ok((argmax(&scores), scores))
    }

    /// Three-channel fused decision: the arithmetic mean of the Y, Cb, and
    /// Cr scores, maximized with the lowest-index tie rule.
    pub fn classify_fused(
        &self,
        x_y: &FeatureVector,
        x_cb: &FeatureVector,
        x_cr: &FeatureVector,
    ) -> Result<(usize, Vec<f64>), ClassifyError> {
        if self.color_mode != ColorMode::YCbCr {
            return Err(ClassifyError::MissingChannel(Channel::Cb));
        }
        self.classify(&[x_y.clone(), x_cb.clone(), x_cr.clone()])
    }
}

/// Index of the maximal score; the strict comparison keeps the lowest index
/// on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}
