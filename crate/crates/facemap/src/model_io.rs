//! Binary persistence for the pooled-covariance model. Layout: 4 magic
//! bytes, a little-endian u16 format version, the payload, then a CRC32 of
//! the payload. The version sits outside the checksummed region so a file
//! from a different format generation reports a version mismatch rather
//! than checksum noise. All matrices are row-major little-endian f64.

use std::io;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::classify::{EnrolledClass, MapModel};
use crate::features::{Channel, SelectionMode};
use crate::pipeline::PipelineParams;
use crate::preprocess::ColorMode;

pub const MODEL_MAGIC: [u8; 4] = *b"MAPF";
pub const MODEL_VERSION: u16 = 1;

#[derive(Error, Debug)]
pub enum ModelIoError {
    #[error("cannot access {path}: {source}")]
    IoFailure { path: PathBuf, source: io::Error },
    #[error("model format version {found} is not supported (expected {supported})")]
    VersionMismatch { found: u16, supported: u16 },
    #[error("model file is truncated or corrupted (checksum mismatch)")]
    ChecksumMismatch,
    #[error("malformed model file: {0}")]
    Malformed(String),
}

fn io_err(path: &Path, source: io::Error) -> ModelIoError {
    ModelIoError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Writer {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Reader<'a> {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelIoError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelIoError::Malformed("payload overrun".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ModelIoError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelIoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelIoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String, ModelIoError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| ModelIoError::Malformed("label is not valid UTF-8".into()))
    }

    fn finish(self) -> Result<(), ModelIoError> {
        if self.pos != self.bytes.len() {
            return Err(ModelIoError::Malformed("trailing bytes in payload".into()));
        }
        Ok(())
    }
}

fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<(), ModelIoError> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io_err(path, io::Error::other("path has no file name")))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp_path = path.with_file_name(tmp_name);
    {
        let mut file = std::fs::File::create(&tmp_path).map_err(|e| io_err(path, e))?;
        io::Write::write_all(&mut file, bytes).map_err(|e| io_err(path, e))?;
        file.sync_all().map_err(|e| io_err(path, e))?;
    }
    std::fs::rename(&tmp_path, path).map_err(|e| io_err(path, e))
}

/// Serializes the model together with the feature-extraction parameters a
/// probe must replicate. The write is atomic (temp file plus rename).
pub fn save_model(
    model: &MapModel,
    params: &PipelineParams,
    path: &Path,
) -> Result<(), ModelIoError> {
    if params.color_mode != model.color_mode()
        || params.selection_mode != model.selection_mode()
        || params.k != model.k()
        || params.ridge_scale != model.ridge_scale()
    {
        return Err(ModelIoError::Malformed(
            "pipeline parameters disagree with the model being saved".into(),
        ));
    }

    let mut w = Writer::new();
    w.u32(params.width as u32);
    w.u32(params.height as u32);
    w.u8(params.color_mode.code());
    w.u8(params.selection_mode.code());
    w.u8(u8::from(params.equalize_chroma));
    w.u8(u8::from(model.masks().is_some()));
    w.u32(model.k() as u32);
    w.f64(model.ridge_scale());

    let channels = model.channels();
    w.u8(channels.len() as u8);
    for &ch in channels {
        w.u8(ch.code());
    }
    // per-channel ridge actually applied; recomputed on load, stored for
    // self-description and text export
    for &ch in channels {
        w.f64(model.epsilon(ch).expect("channel from the model's own list"));
    }

    let classes = model.classes();
    w.u32(classes.len() as u32);
    for class in classes {
        w.str(&class.label);
        w.u32(class.count as u32);
    }

    if let Some(masks) = model.masks() {
        for mask in masks {
            w.u32(mask.len() as u32);
            for &index in mask {
                w.u32(index as u32);
            }
        }
    }

    for (ci, &ch) in channels.iter().enumerate() {
        for class in classes {
            for &v in class.means[ci].iter() {
                w.f64(v);
            }
        }
        let pooled = model
            .pooled_scatter(ch)
            .expect("channel from the model's own list");
        for r in 0..pooled.nrows() {
            for c in 0..pooled.ncols() {
                w.f64(pooled[(r, c)]);
            }
        }
    }

    let payload = w.buf;
    let mut file_bytes = Vec::with_capacity(payload.len() + 10);
    file_bytes.extend_from_slice(&MODEL_MAGIC);
    file_bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    file_bytes.extend_from_slice(&payload);
    file_bytes.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    write_bytes_atomic(path, &file_bytes)
}

/// Reads a model file back into a query-ready model plus the parameters it
/// was trained under. Version is checked before the checksum; the checksum
/// is checked before any payload field is parsed.
pub fn load_model(path: &Path) -> Result<(MapModel, PipelineParams), ModelIoError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() >= 4 && bytes[..4] != MODEL_MAGIC {
        return Err(ModelIoError::Malformed("bad magic bytes".into()));
    }
    if bytes.len() < 6 {
        return Err(ModelIoError::ChecksumMismatch);
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(ModelIoError::VersionMismatch {
            found: version,
            supported: MODEL_VERSION,
        });
    }
    if bytes.len() < 10 {
        return Err(ModelIoError::ChecksumMismatch);
    }
    let payload = &bytes[6..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored_crc {
        return Err(ModelIoError::ChecksumMismatch);
    }

    let mut r = Reader::new(payload);
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let color_mode = ColorMode::from_code(r.u8()?)
        .ok_or_else(|| ModelIoError::Malformed("unknown color mode code".into()))?;
    let selection_mode = SelectionMode::from_code(r.u8()?)
        .ok_or_else(|| ModelIoError::Malformed("unknown selection mode code".into()))?;
    let equalize_chroma = r.u8()? != 0;
    let masks_present = r.u8()? != 0;
    let k = r.u32()? as usize;
    let ridge_scale = r.f64()?;

    let channel_count = r.u8()? as usize;
    let mut channels = Vec::with_capacity(channel_count);
    for _ in 0..channel_count {
        channels.push(
            Channel::from_code(r.u8()?)
                .ok_or_else(|| ModelIoError::Malformed("unknown channel code".into()))?,
        );
    }
    let mut stored_epsilons = Vec::with_capacity(channel_count);
    for _ in 0..channel_count {
        stored_epsilons.push(r.f64()?);
    }

    let class_count = r.u32()? as usize;
    let mut labels = Vec::with_capacity(class_count);
    let mut counts = Vec::with_capacity(class_count);
    for _ in 0..class_count {
        labels.push(r.str()?);
        counts.push(r.u32()? as usize);
    }

    let masks = if masks_present {
        let mut masks = Vec::with_capacity(channel_count);
        for _ in 0..channel_count {
            let len = r.u32()? as usize;
            let mut mask = Vec::with_capacity(len);
            for _ in 0..len {
                mask.push(r.u32()? as usize);
            }
            masks.push(mask);
        }
        Some(masks)
    } else {
        None
    };

    let mut means_per_channel: Vec<Vec<DVector<f64>>> = Vec::with_capacity(channel_count);
    let mut pooled = Vec::with_capacity(channel_count);
    for _ in 0..channel_count {
        let mut means = Vec::with_capacity(class_count);
        for _ in 0..class_count {
            let mut values = Vec::with_capacity(k);
            for _ in 0..k {
                values.push(r.f64()?);
            }
            means.push(DVector::from_vec(values));
        }
        means_per_channel.push(means);
        let mut scatter = DMatrix::zeros(k, k);
        for row in 0..k {
            for col in 0..k {
                scatter[(row, col)] = r.f64()?;
            }
        }
        pooled.push(scatter);
    }
    r.finish()?;

    let classes = labels
        .into_iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (label, count))| EnrolledClass {
            label,
            count,
            means: means_per_channel.iter().map(|ch| ch[i].clone()).collect(),
        })
        .collect();

    let model = MapModel::from_parts(
        color_mode,
        selection_mode,
        k,
        ridge_scale,
        masks,
        classes,
        pooled,
    )
    .map_err(|e| ModelIoError::Malformed(format!("inconsistent model data: {e}")))?;
    if model.channels() != channels {
        return Err(ModelIoError::Malformed(
            "channel list disagrees with color mode".into(),
        ));
    }

    let params = PipelineParams {
        width,
        height,
        color_mode,
        k,
        selection_mode,
        equalize_chroma,
        ridge_scale,
    };
    Ok((model, params))
}

/// Human-readable tab-separated dump of the model's configuration, per-class
/// counts, class means, and pooled-scatter traces. Lossy and diagnostic
/// only; there is no loader for this format.
pub fn export_text(
    model: &MapModel,
    params: &PipelineParams,
    path: &Path,
) -> Result<(), ModelIoError> {
    let mut out = String::new();
    out.push_str(&format!("format\tMAPF {MODEL_VERSION}\n"));
    out.push_str(&format!("size\t{}x{}\n", params.width, params.height));
    out.push_str(&format!("color\t{}\n", params.color_mode.as_str()));
    out.push_str(&format!("select\t{}\n", params.selection_mode.as_str()));
    out.push_str(&format!("equalize_chroma\t{}\n", params.equalize_chroma));
    out.push_str(&format!("k\t{}\n", model.k()));
    out.push_str(&format!("ridge_scale\t{}\n", model.ridge_scale()));
    out.push_str(&format!("classes\t{}\n", model.class_count()));
    for &ch in model.channels() {
        out.push_str(&format!(
            "epsilon\t{}\t{}\n",
            ch,
            model.epsilon(ch).expect("listed channel")
        ));
        out.push_str(&format!(
            "pooled_trace\t{}\t{}\n",
            ch,
            model.pooled_scatter(ch).expect("listed channel").trace()
        ));
    }
    if let Some(masks) = model.masks() {
        for (&ch, mask) in model.channels().iter().zip(masks) {
            let joined: Vec<String> = mask.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("mask\t{}\t{}\n", ch, joined.join(",")));
        }
    }
    for class in model.classes() {
        out.push_str(&format!("count\t{}\t{}\n", class.label, class.count));
        for (&ch, mean) in model.channels().iter().zip(&class.means) {
            let joined: Vec<String> = mean.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "mean\t{}\t{}\t{}\n",
                ch,
                class.label,
                joined.join("\t")
            ));
        }
    }
    write_bytes_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ClassSamples;
    use crate::features::FeatureVector;

    fn fv(values: &[f64]) -> FeatureVector {
        FeatureVector {
            values: values.to_vec(),
            channel: Channel::Y,
            selection_mode: SelectionMode::PerImageSort,
            mask: None,
        }
    }

    fn gray_model() -> (MapModel, PipelineParams) {
        let classes = vec![
            ClassSamples {
                label: "ana".into(),
                samples: vec![vec![fv(&[1.0, 0.0, 2.0])], vec![fv(&[1.5, 0.5, 2.5])]],
            },
            ClassSamples {
                label: "bo".into(),
                samples: vec![vec![fv(&[-1.0, 3.0, 0.0])], vec![fv(&[-1.2, 2.8, 0.4])]],
            },
        ];
        let model = MapModel::train(&classes, 1e-6).unwrap();
        let params = PipelineParams {
            width: 16,
            height: 16,
            color_mode: ColorMode::Gray,
            k: 3,
            selection_mode: SelectionMode::PerImageSort,
            equalize_chroma: false,
            ridge_scale: 1e-6,
        };
        (model, params)
    }

    fn masked_color_model() -> (MapModel, PipelineParams) {
        let mk = |ch: Channel, values: &[f64], mask: &[usize]| FeatureVector {
            values: values.to_vec(),
            channel: ch,
            selection_mode: SelectionMode::FixedMask,
            mask: Some(mask.to_vec()),
        };
        let sample = |a: f64| {
            vec![
                mk(Channel::Y, &[a, a + 1.0], &[4, 0]),
                mk(Channel::Cb, &[2.0 * a, 1.0], &[3, 1]),
                mk(Channel::Cr, &[a - 1.0, 0.5], &[2, 5]),
            ]
        };
        let classes = vec![
            ClassSamples {
                label: "p".into(),
                samples: vec![sample(1.0), sample(1.3)],
            },
            ClassSamples {
                label: "q".into(),
                samples: vec![sample(-2.0), sample(-2.2)],
            },
        ];
        let model = MapModel::train(&classes, 1e-6).unwrap();
        let params = PipelineParams {
            width: 8,
            height: 8,
            color_mode: ColorMode::YCbCr,
            k: 2,
            selection_mode: SelectionMode::FixedMask,
            equalize_chroma: true,
            ridge_scale: 1e-6,
        };
        (model, params)
    }

    #[test]
    fn round_trip_preserves_scores_bitwise() {
        let (model, params) = gray_model();
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.mapf");
        save_model(&model, &params, &path).unwrap();
        assert!(!dir.path().join("model.mapf.tmp").exists());

        let (loaded, loaded_params) = load_model(&path).unwrap();
        assert_eq!(loaded_params, params);
        assert_eq!(loaded.labels(), model.labels());
        assert_eq!(
            loaded.epsilon(Channel::Y).unwrap(),
            model.epsilon(Channel::Y).unwrap()
        );
        for probe in [
            vec![fv(&[0.9, 0.2, 1.7])],
            vec![fv(&[-1.1, 2.9, 0.2])],
            vec![fv(&[0.0, 0.0, 0.0])],
        ] {
            let a = model.scores(&probe).unwrap();
            let b = loaded.scores(&probe).unwrap();
            assert_eq!(a, b, "scores must survive the round trip exactly");
        }
    }

    #[test]
    fn masked_color_model_round_trips() {
        let (model, params) = masked_color_model();
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.mapf");
        save_model(&model, &params, &path).unwrap();
        let (loaded, loaded_params) = load_model(&path).unwrap();
        assert_eq!(loaded_params, params);
        assert_eq!(loaded.masks(), model.masks());
        assert_eq!(loaded.channels(), model.channels());
        for class in model.classes() {
            let twin = loaded
                .classes()
                .iter()
                .find(|c| c.label == class.label)
                .unwrap();
            assert_eq!(twin.count, class.count);
            for (a, b) in class.means.iter().zip(&twin.means) {
                assert_eq!(a.as_slice(), b.as_slice());
            }
        }
    }

    #[test]
    fn bumped_version_is_rejected_before_checksum() {
        let (model, params) = gray_model();
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.mapf");
        save_model(&model, &params, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = bytes[4].wrapping_add(1);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ModelIoError::VersionMismatch {
                found: 2,
                supported: 1
            })
        ));
    }

    #[test]
    fn truncation_anywhere_is_a_checksum_mismatch() {
        let (model, params) = gray_model();
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.mapf");
        save_model(&model, &params, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [3, 5, 9, 10, bytes.len() / 2, bytes.len() - 1] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            assert!(
                matches!(load_model(&path), Err(ModelIoError::ChecksumMismatch)),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn payload_corruption_is_a_checksum_mismatch() {
        let (model, params) = gray_model();
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.mapf");
        save_model(&model, &params, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ModelIoError::ChecksumMismatch)
        ));
    }

    #[test]
    fn foreign_file_is_malformed() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.mapf");
        std::fs::write(&path, b"PNG\x0dthis is not a model").unwrap();
        assert!(matches!(load_model(&path), Err(ModelIoError::Malformed(_))));
    }

    #[test]
    fn unwritable_target_is_an_io_failure() {
        let (model, params) = gray_model();
        let dir = tempfile::TempDir::new().unwrap();
        // a file used as a directory component makes creation fail even for root
        let blocker = dir.path().join("blocker");
        std::fs::write(&blocker, b"x").unwrap();
        let path = blocker.join("model.mapf");
        assert!(matches!(
            save_model(&model, &params, &path),
            Err(ModelIoError::IoFailure { .. })
        ));
    }

    #[test]
    fn mismatched_params_are_rejected_on_save() {
        let (model, params) = gray_model();
        let dir = tempfile::TempDir::new().unwrap();
        let bad = PipelineParams { k: 7, ..params };
        assert!(matches!(
            save_model(&model, &bad, &dir.path().join("m")),
            Err(ModelIoError::Malformed(_))
        ));
    }

    #[test]
    fn resaving_over_an_existing_file_works() {
        let (model, params) = gray_model();
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.mapf");
        save_model(&model, &params, &path).unwrap();
        save_model(&model, &params, &path).unwrap();
        assert!(load_model(&path).is_ok());
    }

    #[test]
    fn text_export_lists_config_and_classes() {
        let (model, params) = masked_color_model();
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("model.tsv");
        export_text(&model, &params, &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert!(content.contains("k\t2\n"));
        assert!(content.contains("color\tycbcr\n"));
        assert!(content.contains("count\tp\t2\n"));
        assert!(content.contains("mask\tcb\t3,1\n"));
        assert!(content.lines().any(|l| l.starts_with("mean\tcr\tq\t")));
    }
}
