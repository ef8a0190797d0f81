//! Effective run configuration. Values are resolved in three layers:
//! built-in defaults, then an optional flat `key = value` config file, then
//! command-line flags. Later layers override earlier ones key by key.

use std::path::{Path, PathBuf};

use facemap::pipeline::{ClassifierKind, PipelineParams};
use facemap::preprocess::ColorMode;
use facemap::Error;
use facemap::SelectionMode;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Dataset root holding one subdirectory of images per class.
    pub data: Option<PathBuf>,
    /// Directory that receives models and reports.
    pub out: PathBuf,
    /// Seed for the per-class train/test shuffle.
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub color: ColorMode,
    /// Coefficients kept per channel.
    pub k: usize,
    pub select: SelectionMode,
    pub classifier: ClassifierKind,
    /// Subspace dimension for the baselines; 0 picks an automatic value.
    pub m: usize,
    pub ridge_scale: f64,
    pub equalize_chroma: bool,
    /// Training images taken from the front of each class's shuffled list.
    pub train_per_class: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            out: PathBuf::from("out"),
            seed: 0,
            width: 128,
            height: 128,
            color: ColorMode::YCbCr,
            k: 64,
            select: SelectionMode::PerImageSort,
            classifier: ClassifierKind::Map,
            m: 0,
            ridge_scale: facemap::classify::DEFAULT_RIDGE_SCALE,
            equalize_chroma: false,
            train_per_class: 5,
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> PipelineParams {
        PipelineParams {
            width: self.width,
            height: self.height,
            color_mode: self.color,
            k: self.k,
            selection_mode: self.select,
            equalize_chroma: self.equalize_chroma,
            ridge_scale: self.ridge_scale,
        }
    }

    /// Serializes every field as one `key = value` line in a fixed order.
    /// Parsing the output reproduces the config exactly, including the
    /// ridge scale, whose shortest decimal form round-trips bitwise.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        if let Some(data) = &self.data {
            out.push_str(&format!("data = {}\n", data.display()));
        }
        out.push_str(&format!("out = {}\n", self.out.display()));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("width = {}\n", self.width));
        out.push_str(&format!("height = {}\n", self.height));
        out.push_str(&format!("color = {}\n", self.color.as_str()));
        out.push_str(&format!("k = {}\n", self.k));
        out.push_str(&format!("select = {}\n", self.select.as_str()));
        out.push_str(&format!("classifier = {}\n", self.classifier.as_str()));
        out.push_str(&format!("m = {}\n", self.m));
        out.push_str(&format!("ridge_scale = {}\n", self.ridge_scale));
        out.push_str(&format!("equalize_chroma = {}\n", self.equalize_chroma));
        out.push_str(&format!("train_per_class = {}\n", self.train_per_class));
        out
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, Error> {
        let content = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut cfg = RunConfig::default();
        cfg.merge_str(&content)
            .map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
                other => other,
            })?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values. Blank
    /// lines and `#` comments are skipped; unknown keys are errors.
    pub fn merge_str(&mut self, content: &str) -> Result<(), Error> {
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("line {}: {msg}", lineno + 1)),
                    other => other,
                })?;
        }
        self.validate()
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), Error> {
        let bad = |what: &str| Error::Config(format!("{key}: {what}: {value}"));
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "seed" => self.seed = value.parse().map_err(|_| bad("not an unsigned integer"))?,
            "width" => self.width = value.parse().map_err(|_| bad("not an unsigned integer"))?,
            "height" => self.height = value.parse().map_err(|_| bad("not an unsigned integer"))?,
            "color" => {
                self.color = ColorMode::parse(value).ok_or_else(|| bad("expected gray or ycbcr"))?
            }
            "k" => self.k = value.parse().map_err(|_| bad("not an unsigned integer"))?,
            "select" => {
                self.select =
                    SelectionMode::parse(value).ok_or_else(|| bad("expected sort or mask"))?
            }
            "classifier" => {
                self.classifier =
                    ClassifierKind::parse(value).ok_or_else(|| bad("expected map, pca, or lda"))?
            }
            "m" => self.m = value.parse().map_err(|_| bad("not an unsigned integer"))?,
            "ridge_scale" => {
                self.ridge_scale = value.parse().map_err(|_| bad("not a number"))?
            }
            "equalize_chroma" => {
                self.equalize_chroma = value.parse().map_err(|_| bad("expected true or false"))?
            }
            "train_per_class" => {
                self.train_per_class =
                    value.parse().map_err(|_| bad("not an unsigned integer"))?
            }
            _ => return Err(Error::Config(format!("unknown key: {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("width and height must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.train_per_class == 0 {
            return Err(Error::Config("train_per_class must be at least 1".into()));
        }
        if !self.ridge_scale.is_finite() || self.ridge_scale < 0.0 {
            return Err(Error::Config(format!(
                "ridge_scale must be a finite non-negative number, got {}",
                self.ridge_scale
            )));
        }
        Ok(())
    }
}
