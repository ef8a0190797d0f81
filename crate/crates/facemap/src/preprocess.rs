//! Color space transform and histogram equalization.
//!
//! RGB images become either a single luminance plane or full-range YCbCr
//! planes. Luminance is always histogram-equalized to flatten lighting
//! variation; chrominance passes through untouched unless explicitly
//! requested, since skin-tone information lives there.

use std::fmt;

use thiserror::Error;

use crate::ingest::RgbImage;
use crate::plane::Plane;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorMode {
    Gray,
    YCbCr,
}

impl ColorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ColorMode::Gray => "gray",
            ColorMode::YCbCr => "ycbcr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gray" => Some(ColorMode::Gray),
            "ycbcr" => Some(ColorMode::YCbCr),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ColorMode::Gray => 0,
            ColorMode::YCbCr => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ColorMode::Gray),
            1 => Some(ColorMode::YCbCr),
            _ => None,
        }
    }
}

impl fmt::Display for ColorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("empty plane")]
    EmptyPlane,
}

/// Per-channel planes of one image. In gray mode only `y` is present; in
/// ycbcr mode all three are, with identical dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPlanes {
    pub color_mode: ColorMode,
    pub y: Plane,
    pub cb: Option<Plane>,
    pub cr: Option<Plane>,
}

impl ChannelPlanes {
    pub fn width(&self) -> usize {
        self.y.cols()
    }

    pub fn height(&self) -> usize {
        self.y.rows()
    }

    /// Active planes in fixed (Y, Cb, Cr) order.
    pub fn planes(&self) -> Vec<(crate::features::Channel, &Plane)> {
        let mut out = vec![(crate::features::Channel::Y, &self.y)];
        if let Some(cb) = &self.cb {
            out.push((crate::features::Channel::Cb, cb));
        }
        if let Some(cr) = &self.cr {
            out.push((crate::features::Channel::Cr, cr));
        }
        out
    }
}

/// Full-range YCbCr forward transform of one pixel, clamped to [0, 255].
pub fn rgb_to_ycbcr_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    (
        y.clamp(0.0, 255.0),
        cb.clamp(0.0, 255.0),
        cr.clamp(0.0, 255.0),
    )
}

/// Standard inverse of `rgb_to_ycbcr_pixel`, clamped to [0, 255]. For
/// pixels whose forward transform does not clamp, the round trip agrees
/// with the original within one intensity level per channel.
pub fn ycbcr_to_rgb_pixel(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let r = y + 1.402 * (cr - 128.0);
    let g = y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0);
    let b = y + 1.772 * (cb - 128.0);
    (
        r.clamp(0.0, 255.0),
        g.clamp(0.0, 255.0),
        b.clamp(0.0, 255.0),
    )
}

/// Raw full-range YCbCr planes of an image, without any equalization.
pub fn rgb_to_ycbcr(img: &RgbImage) -> ChannelPlanes {
    let rows = img.height();
    let cols = img.width();
    let n = rows * cols;
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for i in 0..n {
        let (py, pcb, pcr) =
            rgb_to_ycbcr_pixel(img.r.data()[i], img.g.data()[i], img.b.data()[i]);
        y.push(py);
        cb.push(pcb);
        cr.push(pcr);
    }
    ChannelPlanes {
        color_mode: ColorMode::YCbCr,
        y: Plane::from_vec(rows, cols, y),
        cb: Some(Plane::from_vec(rows, cols, cb)),
        cr: Some(Plane::from_vec(rows, cols, cr)),
    }
}

/// The luminance plane alone (same weights as the Y of `rgb_to_ycbcr`).
pub fn luma(img: &RgbImage) -> Plane {
    let rows = img.height();
    let cols = img.width();
    let mut y = Vec::with_capacity(rows * cols);
    for i in 0..rows * cols {
        y.push(
            (0.299 * img.r.data()[i] + 0.587 * img.g.data()[i] + 0.114 * img.b.data()[i])
                .clamp(0.0, 255.0),
        );
    }
    Plane::from_vec(rows, cols, y)
}

/// Histogram equalization over 256 bins.
///
/// Values are binned by round-then-clamp to 0..=255 and remapped by
/// v' = round(255 (cdf(v) - cdf_min) / (N - cdf_min)), where cdf_min is the
/// cdf at the lowest occupied bin. A plane occupying a single bin is
/// returned unchanged: the formula degenerates to 0/0 there and identity is
/// the least surprising total extension. The remap is monotone, so pixel
/// rank order is preserved.
pub fn equalize(plane: &Plane) -> Result<Plane, PreprocessError> {
    if plane.is_empty() {
        return Err(PreprocessError::EmptyPlane);
    }
    let n = plane.len();
    let mut hist = [0usize; 256];
    for v in plane.iter() {
        hist[bin(v)] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (slot, count) in cdf.iter_mut().zip(hist) {
        acc += count;
        *slot = acc;
    }
    let cdf_min = cdf
        .iter()
        .copied()
        .find(|&c| c > 0)
        .expect("nonempty plane fills at least one bin");
    if cdf_min == n {
        return Ok(plane.clone());
    }
    let denom = (n - cdf_min) as f64;
    let data = plane
        .iter()
        .map(|v| (255.0 * (cdf[bin(v)] - cdf_min) as f64 / denom).round())
        .collect();
    Ok(Plane::from_vec(plane.rows(), plane.cols(), data))
}

fn bin(v: f64) -> usize {
    v.clamp(0.0, 255.0).round() as usize
}

/// The per-channel planes that feed DCT extraction: gray mode yields the
/// equalized luminance; ycbcr mode additionally carries Cb and Cr, which
/// are equalized only when `equalize_chroma` is set.
pub fn prepare_channels(
    img: &RgbImage,
    mode: ColorMode,
    equalize_chroma: bool,
) -> Result<ChannelPlanes, PreprocessError> {
    match mode {
        ColorMode::Gray => Ok(ChannelPlanes {
            color_mode: mode,
            y: equalize(&luma(img))?,
            cb: None,
            cr: None,
        }),
        ColorMode::YCbCr => {
            let raw = rgb_to_ycbcr(img);
            let y = equalize(&raw.y)?;
            let (cb, cr) = if equalize_chroma {
                (
                    equalize(raw.cb.as_ref().expect("ycbcr has cb"))?,
                    equalize(raw.cr.as_ref().expect("ycbcr has cr"))?,
                )
            } else {
                (raw.cb.unwrap(), raw.cr.unwrap())
            };
            Ok(ChannelPlanes {
                color_mode: mode,
                y,
                cb: Some(cb),
                cr: Some(cr),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn neutral_gray_maps_to_neutral_ycbcr() {
        let (y, cb, cr) = rgb_to_ycbcr_pixel(128.0, 128.0, 128.0);
        assert_abs_diff_eq!(y, 128.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cb, 128.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cr, 128.0, epsilon = 1e-9);
    }

    #[test]
    fn white_maps_to_full_luma_neutral_chroma() {
        let (y, cb, cr) = rgb_to_ycbcr_pixel(255.0, 255.0, 255.0);
        assert_abs_diff_eq!(y, 255.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cb, 128.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cr, 128.0, epsilon = 1e-9);
    }

    #[test]
    fn pure_red_frozen_values() {
        let (y, cb, cr) = rgb_to_ycbcr_pixel(255.0, 0.0, 0.0);
        assert_abs_diff_eq!(y, 76.245, epsilon = 1e-9);
        assert_abs_diff_eq!(cb, 84.97232, epsilon = 1e-9);
        assert_abs_diff_eq!(cr, 255.0, epsilon = 1e-9); // 255.5 clamped
    }

    proptest! {
        #[test]
        fn round_trip_within_one_level_when_unclamped(
            r in 0.0f64..=255.0,
            g in 0.0f64..=255.0,
            b in 0.0f64..=255.0,
        ) {
            let y = 0.299 * r + 0.587 * g + 0.114 * b;
            let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
            let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
            prop_assume!((0.0..=255.0).contains(&cb) && (0.0..=255.0).contains(&cr));
            prop_assume!((0.0..=255.0).contains(&y));
            let (r2, g2, b2) = ycbcr_to_rgb_pixel(y, cb, cr);
            prop_assert!((r - r2).abs() <= 1.0);
            prop_assert!((g - g2).abs() <= 1.0);
            prop_assert!((b - b2).abs() <= 1.0);
        }

        #[test]
        fn equalize_preserves_rank_order(values in prop::collection::vec(0.0f64..=255.0, 2..64)) {
            let n = values.len();
            let plane = Plane::from_vec(1, n, values.clone());
            let out = equalize(&plane).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if values[i] <= values[j] {
                        prop_assert!(out.data()[i] <= out.data()[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn equalize_constant_plane_is_identity() {
        let plane = Plane::filled(3, 3, 77.0);
        assert_eq!(equalize(&plane).unwrap(), plane);
    }

    #[test]
    fn equalize_extremes_stay_fixed() {
        let plane = Plane::from_vec(2, 1, vec![0.0, 255.0]);
        assert_eq!(equalize(&plane).unwrap().data(), &[0.0, 255.0]);
    }

    #[test]
    fn equalize_small_plane_frozen_values() {
        // cdf is {10: 2, 20: 3, 30: 4}, cdf_min = 2, N = 4:
        // 10 -> 0, 20 -> round(255/2) = 128, 30 -> 255.
        let plane = Plane::from_vec(4, 1, vec![10.0, 10.0, 20.0, 30.0]);
        assert_eq!(equalize(&plane).unwrap().data(), &[0.0, 0.0, 128.0, 255.0]);
    }

    #[test]
    fn equalize_is_idempotent_when_bins_stay_distinct() {
        let plane = Plane::from_vec(4, 1, vec![10.0, 10.0, 20.0, 30.0]);
        let once = equalize(&plane).unwrap();
        let twice = equalize(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn equalize_rejects_empty_plane() {
        assert_eq!(
            equalize(&Plane::zeros(0, 0)),
            Err(PreprocessError::EmptyPlane)
        );
    }

    #[test]
    fn grayscale_content_gives_neutral_chroma() {
        let plane = Plane::from_fn(3, 3, |r, c| (r * 40 + c * 20) as f64);
        let img = RgbImage::new(plane.clone(), plane.clone(), plane);
        let channels = prepare_channels(&img, ColorMode::YCbCr, false).unwrap();
        let cb = channels.cb.unwrap();
        let cr = channels.cr.unwrap();
        assert!(cb.iter().all(|v| (v - 128.0).abs() < 1e-9));
        assert!(cr.iter().all(|v| (v - 128.0).abs() < 1e-9));
    }

    #[test]
    fn gray_mode_has_no_chroma_planes() {
        let plane = Plane::from_fn(2, 2, |r, c| (r * 100 + c * 50) as f64);
        let img = RgbImage::new(plane.clone(), plane.clone(), plane);
        let channels = prepare_channels(&img, ColorMode::Gray, false).unwrap();
        assert_eq!(channels.color_mode, ColorMode::Gray);
        assert!(channels.cb.is_none());
        assert!(channels.cr.is_none());
        assert_eq!(channels.planes().len(), 1);
    }

    #[test]
    fn ycbcr_mode_equalizes_luma_and_passes_chroma_through() {
        let r = Plane::from_vec(2, 2, vec![200.0, 10.0, 90.0, 155.0]);
        let g = Plane::from_vec(2, 2, vec![30.0, 240.0, 90.0, 20.0]);
        let b = Plane::from_vec(2, 2, vec![10.0, 60.0, 220.0, 240.0]);
        let img = RgbImage::new(r, g, b);
        let raw = rgb_to_ycbcr(&img);
        let channels = prepare_channels(&img, ColorMode::YCbCr, false).unwrap();
        assert_eq!(channels.y, equalize(&raw.y).unwrap());
        assert_eq!(channels.cb, raw.cb);
        assert_eq!(channels.cr, raw.cr);
    }
}
