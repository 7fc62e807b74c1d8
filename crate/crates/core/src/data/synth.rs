//! Seeded synthetic scenes: noise background plus colored disks whose
//! centers are the ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::image::ImageRGB;
use crate::error::{Error, Result};
use crate::heatmap::{Point, PointSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_images: usize,
    pub width: usize,
    pub height: usize,
    /// Inclusive range of disks per image.
    pub blobs_per_image: (usize, usize),
    /// Disk radius range in pixels.
    pub blob_radius: (f64, f64),
    /// Minimum center-to-center distance.
    pub min_separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_images: 80,
            width: 128,
            height: 128,
            blobs_per_image: (3, 10),
            blob_radius: (4.0, 8.0),
            min_separation: 24.0,
        }
    }
}

const MAX_ATTEMPTS: usize = 10_000;
const BACKGROUND_MAX: f32 = 0.4;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parameter("image size must be non-zero".into()));
        }
        let (bmin, bmax) = self.blobs_per_image;
        if bmin > bmax {
            return Err(Error::Parameter(format!("blob count range {bmin}..={bmax} is empty")));
        }
        let (rmin, rmax) = self.blob_radius;
        if !(rmin > 0.0 && rmin <= rmax) {
            return Err(Error::Parameter(format!("blob radius range {rmin}..={rmax} is invalid")));
        }
        if self.min_separation.is_nan() || self.min_separation < 2.0 * rmax {
            return Err(Error::Parameter(format!(
                "min_separation {} must be at least twice the max radius {rmax}",
                self.min_separation
            )));
        }
        if 2.0 * rmax >= self.width.min(self.height) as f64 {
            return Err(Error::Parameter(format!(
                "disks of radius {rmax} do not fit a {}x{} image",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// One labelled scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ImageRGB,
    pub points: PointSet,
}

/// Generates `n_images` scenes; image `i` depends only on `(seed, i)`.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    (0..cfg.n_images)
        .into_par_iter()
        .map(|i| synth_image(cfg, i))
        .collect()
}

fn synth_image(cfg: &SynthConfig, index: usize) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (w, h) = (cfg.width, cfg.height);
    let pixels = (0..w * h * 3).map(|_| rng.gen_range(0.0..BACKGROUND_MAX)).collect();
    let mut image = ImageRGB::new(w, h, pixels)?;

    let count = rng.gen_range(cfg.blobs_per_image.0..=cfg.blobs_per_image.1);
    let (rmin, rmax) = cfg.blob_radius;
    let mut centers: Vec<Point> = Vec::with_capacity(count);
    let mut radii = Vec::with_capacity(count);
    for k in 0..count {
        let radius = if rmax > rmin { rng.gen_range(rmin..=rmax) } else { rmin };
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let c = Point::new(
                rng.gen_range(radius..w as f64 - radius),
                rng.gen_range(radius..h as f64 - radius),
            );
            if centers.iter().all(|o| o.distance(&c) >= cfg.min_separation) {
                placed = Some(c);
                break;
            }
        }
        let Some(c) = placed else {
            return Err(Error::Generation(format!(
                "image {index}: could not place disk {} of {count} with min_separation {} after {MAX_ATTEMPTS} attempts",
                k + 1,
                cfg.min_separation
            )));
        };
        centers.push(c);
        radii.push(radius);
    }

    for (c, &r) in centers.iter().zip(&radii) {
        let color = bright_color(&mut rng);
        let x0 = (c.x - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((c.x + r + 1.0).ceil() as usize).min(w - 1);
        let y0 = (c.y - r - 1.0).floor().max(0.0) as usize;
        let y1 = ((c.y + r + 1.0).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                // Pixel-center distance; one-pixel linear ramp at the rim.
                let d = (x as f64 + 0.5 - c.x).hypot(y as f64 + 0.5 - c.y);
                let cover = (r + 0.5 - d).clamp(0.0, 1.0) as f32;
                if cover > 0.0 {
                    let bg = image.get(x, y);
                    let mixed = [0, 1, 2].map(|ch| bg[ch] + (color[ch] - bg[ch]) * cover);
                    image.set(x, y, mixed);
                }
            }
        }
    }
    let points = PointSet::new(w, h, centers)?;
    Ok(Sample { image, points })
}

/// Saturated color with at least one channel near full intensity.
fn bright_color<R: Rng>(rng: &mut R) -> [f32; 3] {
    let hue: f32 = rng.gen_range(0.0..6.0);
    let low: f32 = rng.gen_range(0.0..0.35);
    let f = hue.fract();
    let (a, b) = (1.0 - f * (1.0 - low), low + f * (1.0 - low));
    match hue as u32 {
        0 => [1.0, b, low],
        1 => [a, 1.0, low],
        2 => [low, 1.0, b],
        3 => [low, a, 1.0],
        4 => [b, low, 1.0],
        _ => [1.0, low, a],
    }
}
