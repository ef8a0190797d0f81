//! Dataset loading: class-per-directory scanning with seeded train/test
//! splits, image decoding to RGB planes, and bilinear resizing to the
//! canonical resolution.

use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::plane::Plane;

#[derive(Error, Debug)]
pub enum IngestError {
    #[error("empty dataset: {path} is not a directory of class subdirectories with images")]
    EmptyDataset { path: PathBuf },
    #[error(
        "class {label} cannot satisfy the split: {available} images available, \
         {requested} requested for training (at least one probe must remain)"
    )]
    ClassTooSmall {
        label: String,
        available: usize,
        requested: usize,
    },
    #[error("cannot read image {path}: {detail}")]
    UnreadableImage { path: PathBuf, detail: String },
    #[error("unsupported image format: {path}")]
    UnsupportedFormat { path: PathBuf },
    #[error("corrupt image file {path}: {detail}")]
    CorruptFile { path: PathBuf, detail: String },
    #[error("resize target dimensions must be at least 1x1")]
    ZeroDimension,
    #[error("i/o failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A decoded image as three intensity planes in [0, 255]. Grayscale sources
/// decode with r = g = b.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub r: Plane,
    pub g: Plane,
    pub b: Plane,
}

impl RgbImage {
    /// Panics if the planes disagree on dimensions; callers construct the
    /// three planes together, so a mismatch is a programming error.
    pub fn new(r: Plane, g: Plane, b: Plane) -> Self {
        assert!(
            r.rows() == g.rows()
                && r.rows() == b.rows()
                && r.cols() == g.cols()
                && r.cols() == b.cols(),
            "rgb planes must share dimensions"
        );
        RgbImage { r, g, b }
    }

    pub fn width(&self) -> usize {
        self.r.cols()
    }

    pub fn height(&self) -> usize {
        self.r.rows()
    }
}

/// Per-class split policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitSpec {
    /// Exactly this many training images per class; the rest are probes.
    TrainCount(usize),
    /// This fraction of each class trains, rounded, always leaving at least
    /// one training image and one probe.
    TrainRatio(f64),
}

#[derive(Clone, Debug)]
pub struct ClassEntry {
    pub label: String,
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

/// Deterministic listing of a dataset: classes in lexicographic label order
/// (which defines the class index used everywhere downstream), each with a
/// seeded train/test split.
#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub root: PathBuf,
    pub classes: Vec<ClassEntry>,
}

impl DatasetIndex {
    pub fn labels(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }

    pub fn total_train(&self) -> usize {
        self.classes.iter().map(|c| c.train.len()).sum()
    }

    pub fn total_test(&self) -> usize {
        self.classes.iter().map(|c| c.test.len()).sum()
    }

    /// SHA-256 over labels, file names, and split assignment. Identifies the
    /// dataset content listing independent of its absolute location.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for class in &self.classes {
            hasher.update(b"class\0");
            hasher.update(class.label.as_bytes());
            hasher.update(b"\0");
            for path in &class.train {
                hasher.update(b"train\0");
                hasher.update(file_name_bytes(path));
                hasher.update(b"\0");
            }
            for path in &class.test {
                hasher.update(b"test\0");
                hasher.update(file_name_bytes(path));
                hasher.update(b"\0");
            }
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(digest.len() * 2);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

fn file_name_bytes(path: &Path) -> &[u8] {
    path.file_name()
        .map(|n| n.as_encoded_bytes())
        .unwrap_or_default()
}

const IMAGE_EXTENSIONS: [&str; 4] = ["pgm", "ppm", "pnm", "png"];

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Lists the image files of one class directory in sorted order, skipping
/// non-image entries with a warning. Errors when the directory holds no
/// usable images.
pub fn list_class_images(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))? {
        let entry = entry.map_err(|e| IngestError::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && is_image_file(&path) {
            files.push(path);
        } else {
            log::warn!("ignoring non-image entry: {}", path.display());
        }
    }
    if files.is_empty() {
        return Err(IngestError::EmptyDataset {
            path: dir.to_path_buf(),
        });
    }
    files.sort();
    Ok(files)
}

/// Scans `<root>/<class_label>/<image files>` and assigns a seeded
/// stratified split. Pure in (directory listing, split, seed): repeated
/// calls give identical indices. Non-image files are ignored with a
/// warning; class directories without images are skipped with a warning.
pub fn scan_dataset(
    root: &Path,
    split: SplitSpec,
    seed: u64,
) -> Result<DatasetIndex, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::EmptyDataset {
            path: root.to_path_buf(),
        });
    }

    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| IngestError::io(root, e))? {
        let entry = entry.map_err(|e| IngestError::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            class_dirs.push((entry.file_name().to_string_lossy().into_owned(), path));
        } else {
            log::warn!("ignoring stray file at dataset root: {}", path.display());
        }
    }
    class_dirs.sort_by(|a, b| a.0.cmp(&b.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = Vec::new();
    for (label, dir) in class_dirs {
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| IngestError::io(&dir, e))? {
            let entry = entry.map_err(|e| IngestError::io(&dir, e))?;
            let path = entry.path();
            if path.is_file() && is_image_file(&path) {
                files.push(path);
            } else {
                log::warn!("ignoring non-image entry: {}", path.display());
            }
        }
        if files.is_empty() {
            log::warn!("class directory {} has no images; skipped", dir.display());
            continue;
        }
        files.sort();

        let n = files.len();
        let train_count = match split {
            SplitSpec::TrainCount(count) => count,
            SplitSpec::TrainRatio(ratio) => {
                ((ratio * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
            }
        };
        if train_count == 0 || train_count >= n {
            return Err(IngestError::ClassTooSmall {
                label,
                available: n,
                requested: train_count,
            });
        }

        files.shuffle(&mut rng);
        let mut test = files.split_off(train_count);
        let mut train = files;
        train.sort();
        test.sort();
        classes.push(ClassEntry { label, train, test });
    }

    if classes.is_empty() {
        return Err(IngestError::EmptyDataset {
            path: root.to_path_buf(),
        });
    }
    Ok(DatasetIndex {
        root: root.to_path_buf(),
        classes,
    })
}

/// Decodes one raster file (PGM/PPM in both binary and ASCII, PNG) to RGB
/// planes in [0, 255].
pub fn load_image(path: &Path) -> Result<RgbImage, IngestError> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| IngestError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| IngestError::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(_) => IngestError::UnsupportedFormat {
            path: path.to_path_buf(),
        },
        // Truncated streams surface as decode-time i/o errors; from the
        // caller's point of view the file content is bad, not the device.
        other => IngestError::CorruptFile {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    })?;
    let rgb = decoded.to_rgb8();
    let (width, height) = (rgb.width() as usize, rgb.height() as usize);
    if width == 0 || height == 0 {
        return Err(IngestError::CorruptFile {
            path: path.to_path_buf(),
            detail: "zero-sized image".into(),
        });
    }
    let mut r = Vec::with_capacity(width * height);
    let mut g = Vec::with_capacity(width * height);
    let mut b = Vec::with_capacity(width * height);
    for px in rgb.pixels() {
        r.push(px[0] as f64);
        g.push(px[1] as f64);
        b.push(px[2] as f64);
    }
    Ok(RgbImage::new(
        Plane::from_vec(height, width, r),
        Plane::from_vec(height, width, g),
        Plane::from_vec(height, width, b),
    ))
}

/// Bilinear resize with center-aligned sampling. Values stay in [0, 255];
/// resizing to the current size reproduces the input exactly, which makes
/// the operation idempotent at a fixed target size.
pub fn resize(img: &RgbImage, target_w: usize, target_h: usize) -> Result<RgbImage, IngestError> {
    if target_w == 0 || target_h == 0 {
        return Err(IngestError::ZeroDimension);
    }
    Ok(RgbImage::new(
        resize_plane(&img.r, target_h, target_w),
        resize_plane(&img.g, target_h, target_w),
        resize_plane(&img.b, target_h, target_w),
    ))
}

/// The plane-level kernel behind `resize`.
pub fn resize_plane(plane: &Plane, target_rows: usize, target_cols: usize) -> Plane {
    let src_rows = plane.rows();
    let src_cols = plane.cols();
    let row_scale = src_rows as f64 / target_rows as f64;
    let col_scale = src_cols as f64 / target_cols as f64;
    // lerp as a + t(b - a): exact at t = 0, so same-size resizes and
    // constant planes reproduce their inputs bit for bit.
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    Plane::from_fn(target_rows, target_cols, |out_r, out_c| {
        let sr = ((out_r as f64 + 0.5) * row_scale - 0.5).clamp(0.0, (src_rows - 1) as f64);
        let sc = ((out_c as f64 + 0.5) * col_scale - 0.5).clamp(0.0, (src_cols - 1) as f64);
        let r0 = sr.floor() as usize;
        let c0 = sc.floor() as usize;
        let r1 = (r0 + 1).min(src_rows - 1);
        let c1 = (c0 + 1).min(src_cols - 1);
        let tr = sr - r0 as f64;
        let tc = sc - c0 as f64;
        let top = lerp(plane.get(r0, c0), plane.get(r0, c1), tc);
        let bottom = lerp(plane.get(r1, c0), plane.get(r1, c1), tc);
        lerp(top, bottom, tr).clamp(0.0, 255.0)
    })
}
