//! Seeded generator of small colored face-like datasets. Each class gets a
//! fixed chroma mean on a circle around the neutral point plus a weak
//! low-frequency luma pattern; every image adds fresh pixel noise. Chroma
//! therefore carries most of the identity and luma a minor share, which is
//! the regime where channel fusion should beat a grayscale pipeline.
//! Used by benchmarks, integration tests, and CLI smoke runs.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::features::idct_decompose;
use crate::ingest::RgbImage;
use crate::plane::Plane;
use crate::preprocess::ycbcr_to_rgb_pixel;

#[derive(Clone, Copy, Debug)]
pub struct SynthSpec {
    pub classes: usize,
    pub images_per_class: usize,
    pub width: usize,
    pub height: usize,
    /// Radius of the per-class chroma offset circle around (128, 128).
    pub chroma_scale: f64,
    /// Standard deviation of the per-class low-frequency luma coefficients.
    pub luma_scale: f64,
    /// Per-pixel Gaussian noise on every channel of every image.
    pub noise_sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        // identity split roughly 70% chroma / 30% luma at amplitude 40
        SynthSpec {
            classes: 20,
            images_per_class: 10,
            width: 32,
            height: 32,
            chroma_scale: 28.0,
            luma_scale: 12.0,
            noise_sigma: 10.0,
        }
    }
}

/// Frequency slots that carry the per-class luma pattern, as (row, col)
/// positions in the spectrum. All low-frequency, none the mean term, so
/// the pattern survives resizing and histogram equalization.
const LUMA_SLOTS: [(usize, usize); 5] = [(0, 1), (1, 0), (1, 1), (0, 2), (2, 0)];

/// Generates the corpus in memory: one (label, images) entry per class,
/// fully determined by the parameters and the seed.
pub fn generate_corpus(spec: &SynthSpec, seed: u64) -> Vec<(String, Vec<RgbImage>)> {
    assert!(spec.classes > 0 && spec.images_per_class > 0);
    assert!(spec.width >= 4 && spec.height >= 4, "luma slots need room");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma).unwrap();
    let luma_coeff = Normal::new(0.0, spec.luma_scale).unwrap();

    let mut corpus = Vec::with_capacity(spec.classes);
    for c in 0..spec.classes {
        let label = format!("class_{c:03}");
        let angle = std::f64::consts::TAU * c as f64 / spec.classes as f64;
        let cb_mean = 128.0 + spec.chroma_scale * angle.cos();
        let cr_mean = 128.0 + spec.chroma_scale * angle.sin();

        // class luma pattern synthesized from a few low-frequency slots
        let mut spectrum = Plane::zeros(spec.height, spec.width);
        for &(row, col) in &LUMA_SLOTS {
            spectrum.set(row, col, luma_coeff.sample(&mut rng));
        }
        let pattern = idct_decompose(&spectrum).unwrap();

        let mut images = Vec::with_capacity(spec.images_per_class);
        for _ in 0..spec.images_per_class {
            let mut r = Plane::zeros(spec.height, spec.width);
            let mut g = Plane::zeros(spec.height, spec.width);
            let mut b = Plane::zeros(spec.height, spec.width);
            for row in 0..spec.height {
                for col in 0..spec.width {
                    let y = 128.0 + pattern.get(row, col) + noise.sample(&mut rng);
                    let cb = cb_mean + noise.sample(&mut rng);
                    let cr = cr_mean + noise.sample(&mut rng);
                    let (pr, pg, pb) = ycbcr_to_rgb_pixel(y, cb, cr);
                    r.set(row, col, pr);
                    g.set(row, col, pg);
                    b.set(row, col, pb);
                }
            }
            images.push(RgbImage::new(r, g, b));
        }
        corpus.push((label, images));
    }
    corpus
}

/// Writes the corpus as a dataset directory: one subdirectory per class
/// holding binary PPM files img_000.ppm, img_001.ppm, ...
pub fn materialize_corpus(root: &Path, spec: &SynthSpec, seed: u64) -> std::io::Result<()> {
    for (label, images) in generate_corpus(spec, seed) {
        let dir = root.join(&label);
        std::fs::create_dir_all(&dir)?;
        for (i, img) in images.iter().enumerate() {
            write_ppm(&dir.join(format!("img_{i:03}.ppm")), img)?;
        }
    }
    Ok(())
}

fn quantize(v: f64) -> u8 {
    v.clamp(0.0, 255.0).round() as u8
}

/// Binary PPM (P6, maxval 255).
pub fn write_ppm(path: &Path, img: &RgbImage) -> std::io::Result<()> {
    let (w, h) = (img.width(), img.height());
    let mut bytes = Vec::with_capacity(w * h * 3 + 32);
    bytes.extend_from_slice(format!("P6\n{w} {h}\n255\n").as_bytes());
    for row in 0..h {
        for col in 0..w {
            bytes.push(quantize(img.r.get(row, col)));
            bytes.push(quantize(img.g.get(row, col)));
            bytes.push(quantize(img.b.get(row, col)));
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)
}

/// Binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, plane: &Plane) -> std::io::Result<()> {
    let (h, w) = (plane.rows(), plane.cols());
    let mut bytes = Vec::with_capacity(w * h + 32);
    bytes.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
    for row in 0..h {
        for col in 0..w {
            bytes.push(quantize(plane.get(row, col)));
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)
}
