//! Whole-image DCT features.
//!
//! A channel plane is taken to the frequency domain with an orthonormal
//! 2-D DCT assembled from two 1-D passes: one over every row, then one
//! over every column of the result. The transform covers the entire plane
//! in a single block rather than 8x8 tiles. A compact descriptor is then
//! formed by keeping the k coefficients of largest magnitude, either
//! re-sorted per image or gathered through a fixed index mask shared by
//! all images.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::plane::Plane;

/// DCT coefficients of one plane; dimensions match the source plane.
pub type FrequencyMatrix = Plane;

/// Channel a feature vector was extracted from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Channel {
    Y,
    Cb,
    Cr,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Y => "y",
            Channel::Cb => "cb",
            Channel::Cr => "cr",
        }
    }

    /// Stable one-byte tag used by the model file.
    pub fn code(self) -> u8 {
        match self {
            Channel::Y => 0,
            Channel::Cb => 1,
            Channel::Cr => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Channel::Y),
            1 => Some(Channel::Cb),
            2 => Some(Channel::Cr),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the k kept coefficients are chosen from a frequency matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMode {
    /// Sort each image's own coefficients by descending magnitude and keep
    /// the first k signed values. Slot j may hold a different frequency for
    /// different images.
    PerImageSort,
    /// Gather signed values at a fixed list of flat indices, so slot j holds
    /// the same frequency for every image.
    FixedMask,
}

impl SelectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::PerImageSort => "sort",
            SelectionMode::FixedMask => "mask",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sort" => Some(SelectionMode::PerImageSort),
            "mask" => Some(SelectionMode::FixedMask),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            SelectionMode::PerImageSort => 0,
            SelectionMode::FixedMask => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SelectionMode::PerImageSort),
            1 => Some(SelectionMode::FixedMask),
            _ => None,
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("empty signal")]
    EmptySignal,
    #[error("empty plane")]
    EmptyPlane,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds the {max} available coefficients")]
    KTooLarge { k: usize, max: usize },
    #[error("bad mask: {0}")]
    BadMask(String),
    #[error("plane is {got_rows}x{got_cols}, expected {want_rows}x{want_cols}")]
    DimensionMismatch {
        want_rows: usize,
        want_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("no training planes")]
    EmptyTrainingSet,
}

/// k signed DCT coefficients describing one channel of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub channel: Channel,
    pub selection_mode: SelectionMode,
    /// Flat coefficient indices the values were gathered from, in output
    /// order; present in fixed-mask mode only.
    pub mask: Option<Vec<usize>>,
}

impl FeatureVector {
    pub fn k(&self) -> usize {
        self.values.len()
    }
}

/// Row-major n x n cosine basis: entry (j, i) is a(j) cos(pi (2i+1) j / 2n)
/// with a(0) = sqrt(1/n) and a(j>0) = sqrt(2/n). Rows are orthonormal, so
/// the same table serves the forward (rows dot signal) and inverse
/// (columns dot spectrum) transforms.
fn dct_basis(n: usize) -> Vec<f64> {
    let mut basis = vec![0.0; n * n];
    let a0 = (1.0 / n as f64).sqrt();
    let a = (2.0 / n as f64).sqrt();
    for j in 0..n {
        let amp = if j == 0 { a0 } else { a };
        for i in 0..n {
            basis[j * n + i] = amp * (PI * (2 * i + 1) as f64 * j as f64 / (2.0 * n as f64)).cos();
        }
    }
    basis
}

/// Orthonormal forward DCT of a 1-D signal:
/// X_j = a(j) sum_i x_i cos(pi (2i+1) j / 2N).
pub fn dct1d(signal: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if signal.is_empty() {
        return Err(FeatureError::EmptySignal);
    }
    let n = signal.len();
    let basis = dct_basis(n);
    let mut out = vec![0.0; n];
    forward_pass(&basis, signal, &mut out);
    Ok(out)
}

/// Exact inverse of `dct1d` (orthonormal transpose).
pub fn idct1d(spectrum: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if spectrum.is_empty() {
        return Err(FeatureError::EmptySignal);
    }
    let n = spectrum.len();
    let basis = dct_basis(n);
    let mut out = vec![0.0; n];
    inverse_pass(&basis, spectrum, &mut out);
    Ok(out)
}

fn forward_pass(basis: &[f64], signal: &[f64], out: &mut [f64]) {
    let n = signal.len();
    for j in 0..n {
        let row = &basis[j * n..(j + 1) * n];
        let mut acc = 0.0;
        for i in 0..n {
            acc += row[i] * signal[i];
        }
        out[j] = acc;
    }
}

fn inverse_pass(basis: &[f64], spectrum: &[f64], out: &mut [f64]) {
    let n = spectrum.len();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += basis[j * n + i] * spectrum[j];
        }
        out[i] = acc;
    }
}

/// 2-D orthonormal DCT of a whole plane: 1-D transform of every row, then
/// of every column of the intermediate. Equal to the direct separable 2-D
/// DCT-II because the two passes act on independent axes.
pub fn dct_decompose(plane: &Plane) -> Result<FrequencyMatrix, FeatureError> {
    transform_plane(plane, forward_pass)
}

/// Exact inverse of `dct_decompose`.
pub fn idct_decompose(freq: &FrequencyMatrix) -> Result<Plane, FeatureError> {
    transform_plane(freq, inverse_pass)
}

fn transform_plane(
    plane: &Plane,
    pass: fn(&[f64], &[f64], &mut [f64]),
) -> Result<Plane, FeatureError> {
    if plane.is_empty() {
        return Err(FeatureError::EmptyPlane);
    }
    let rows = plane.rows();
    let cols = plane.cols();

    let row_basis = dct_basis(cols);
    let mut mid = vec![0.0; rows * cols];
    for r in 0..rows {
        pass(&row_basis, plane.row(r), &mut mid[r * cols..(r + 1) * cols]);
    }

    let col_basis = dct_basis(rows);
    let mut column = vec![0.0; rows];
    let mut transformed = vec![0.0; rows];
    let mut out = vec![0.0; rows * cols];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = mid[r * cols + c];
        }
        pass(&col_basis, &column, &mut transformed);
        for r in 0..rows {
            out[r * cols + c] = transformed[r];
        }
    }
    Ok(Plane::from_vec(rows, cols, out))
}

/// Keeps k signed coefficients from a frequency matrix.
///
/// Per-image sort flattens row-major, orders by descending magnitude with
/// ties broken by ascending flat index (a total order, so the result is
/// deterministic), and keeps the first k. Fixed-mask mode gathers the
/// values at `mask` positions in mask order; the mask must hold exactly k
/// distinct in-range indices.
pub fn select_features(
    freq: &FrequencyMatrix,
    k: usize,
    mode: SelectionMode,
    mask: Option<&[usize]>,
    channel: Channel,
) -> Result<FeatureVector, FeatureError> {
    if freq.is_empty() {
        return Err(FeatureError::EmptyPlane);
    }
    if k == 0 {
        return Err(FeatureError::ZeroK);
    }
    let len = freq.len();
    if k > len {
        return Err(FeatureError::KTooLarge { k, max: len });
    }
    let data = freq.data();
    match mode {
        SelectionMode::PerImageSort => {
            let order = magnitude_order(data);
            let values = order[..k].iter().map(|&i| data[i]).collect();
            Ok(FeatureVector {
                values,
                channel,
                selection_mode: mode,
                mask: None,
            })
        }
        SelectionMode::FixedMask => {
            let mask =
                mask.ok_or_else(|| FeatureError::BadMask("fixed-mask selection needs a mask".into()))?;
            validate_mask(mask, k, len)?;
            let values = mask.iter().map(|&i| data[i]).collect();
            Ok(FeatureVector {
                values,
                channel,
                selection_mode: mode,
                mask: Some(mask.to_vec()),
            })
        }
    }
}

/// Flat indices 0..len sorted by descending |data|, ties by ascending index.
fn magnitude_order(data: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_unstable_by(|&a, &b| data[b].abs().total_cmp(&data[a].abs()).then(a.cmp(&b)));
    order
}

fn validate_mask(mask: &[usize], k: usize, len: usize) -> Result<(), FeatureError> {
    if mask.len() != k {
        return Err(FeatureError::BadMask(format!(
            "mask has {} indices, expected k = {}",
            mask.len(),
            k
        )));
    }
    let mut seen = vec![false; len];
    for &idx in mask {
        if idx >= len {
            return Err(FeatureError::BadMask(format!(
                "index {idx} out of range for {len} coefficients"
            )));
        }
        if seen[idx] {
            return Err(FeatureError::BadMask(format!("duplicate index {idx}")));
        }
        seen[idx] = true;
    }
    Ok(())
}

/// Builds a shared selection mask from training planes: the flat indices of
/// the k largest entries of the mean of |dct_decompose(plane)| across the
/// set, ties by ascending index, emitted in descending mean-magnitude order.
pub fn build_fixed_mask(planes: &[Plane], k: usize) -> Result<Vec<usize>, FeatureError> {
    if planes.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let mut freqs = Vec::with_capacity(planes.len());
    for plane in planes {
        freqs.push(dct_decompose(plane)?);
    }
    build_fixed_mask_from_freqs(&freqs, k)
}

/// Same as `build_fixed_mask` but over already-transformed matrices.
pub fn build_fixed_mask_from_freqs(
    freqs: &[FrequencyMatrix],
    k: usize,
) -> Result<Vec<usize>, FeatureError> {
    let first = freqs.first().ok_or(FeatureError::EmptyTrainingSet)?;
    if first.is_empty() {
        return Err(FeatureError::EmptyPlane);
    }
    if k == 0 {
        return Err(FeatureError::ZeroK);
    }
    if k > first.len() {
        return Err(FeatureError::KTooLarge {
            k,
            max: first.len(),
        });
    }
    let mut mean_abs = vec![0.0; first.len()];
    for freq in freqs {
        if freq.rows() != first.rows() || freq.cols() != first.cols() {
            return Err(FeatureError::DimensionMismatch {
                want_rows: first.rows(),
                want_cols: first.cols(),
                got_rows: freq.rows(),
                got_cols: freq.cols(),
            });
        }
        for (acc, v) in mean_abs.iter_mut().zip(freq.iter()) {
            *acc += v.abs();
        }
    }
    let scale = 1.0 / freqs.len() as f64;
    for acc in &mut mean_abs {
        *acc *= scale;
    }
    let mut order = magnitude_order(&mean_abs);
    order.truncate(k);
    Ok(order)
}
