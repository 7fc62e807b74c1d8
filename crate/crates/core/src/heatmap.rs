//! Point sets to Gaussian heatmaps and back.
//!
//! Coordinates follow image convention: `x` is the column, `y` the row, and
//! the origin is the top-left pixel. Each centroid is stamped as a truncated
//! Gaussian patch rescaled to `[0, 1]`; overlapping patches are fused with an
//! element-wise maximum. Decoding picks thresholded local maxima.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A 2-D location in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Nearest integer pixel (half rounds up for non-negative coordinates).
    pub fn pixel(&self) -> (i64, i64) {
        (self.x.round() as i64, self.y.round() as i64)
    }
}

/// A decoded peak: location plus the heatmap value it was read from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

impl Peak {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Ordered centroids inside a `width × height` frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Point>,
    width: usize,
    height: usize,
}

impl PointSet {
    /// Validates frame bounds and rejects bit-identical duplicates.
    pub fn new(width: usize, height: usize, points: Vec<Point>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "frame must be non-empty, got {width}x{height}"
            )));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let inside = p.x.is_finite()
                && p.y.is_finite()
                && p.x >= 0.0
                && p.y >= 0.0
                && p.x < width as f64
                && p.y < height as f64;
            if !inside {
                return Err(Error::Parameter(format!(
                    "point {i} at ({}, {}) lies outside the {width}x{height} frame",
                    p.x, p.y
                )));
            }
            if !seen.insert((p.x.to_bits(), p.y.to_bits())) {
                return Err(Error::Parameter(format!(
                    "point {i} at ({}, {}) is a duplicate",
                    p.x, p.y
                )));
            }
        }
        Ok(Self {
            points,
            width,
            height,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, Vec::new())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Fixed-width Gaussian kernel: standard deviation plus truncation multiple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    sigma: f64,
    truncation: f64,
}

impl KernelSpec {
    pub const DEFAULT_TRUNCATION: f64 = 3.0;

    pub fn new(sigma: f64, truncation: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
        }
        if !(truncation.is_finite() && truncation >= 1.0) {
            return Err(Error::Parameter(format!(
                "truncation must be >= 1, got {truncation}"
            )));
        }
        Ok(Self { sigma, truncation })
    }

    pub fn with_sigma(sigma: f64) -> Result<Self> {
        Self::new(sigma, Self::DEFAULT_TRUNCATION)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Support radius `ceil(truncation × sigma)` in pixels.
    pub fn radius(&self) -> usize {
        (self.truncation * self.sigma).ceil() as usize
    }

    /// Unscaled Gaussian value at distance `d` from the center.
    pub fn raw_value(&self, d: f64) -> f64 {
        (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

/// Square `(2R+1)²` kernel patch, row-major, already rescaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    radius: usize,
    values: Vec<f64>,
}

impl Patch {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at offset `(dx, dy)` from the center, each in `-R..=R`.
    pub fn at(&self, dx: i64, dy: i64) -> f64 {
        let r = self.radius as i64;
        let side = self.side();
        self.values[(dy + r) as usize * side + (dx + r) as usize]
    }
}

/// Builds the kernel patch: raw Gaussian over the support, then min/max
/// rescaled across the patch so the center is 1 and the corners are 0.
pub fn gaussian_patch(spec: &KernelSpec) -> Patch {
    let radius = spec.radius();
    let r = radius as i64;
    let mut raw = Vec::with_capacity((2 * radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            raw.push(spec.raw_value(((dx * dx + dy * dy) as f64).sqrt()));
        }
    }
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    let values = raw
        .into_iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 1.0 })
        .collect();
    Patch { radius, values }
}

/// Single-channel grid with values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "heatmap must be non-empty, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} heatmap needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Parameter(format!(
                "heatmap value {} at index {i} outside [0, 1]",
                values[i]
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// 8-bit grayscale rendering, `value × 255` rounded half-up.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.to_gray8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )?;
        Ok(())
    }

    /// Writes the `CHM1` raw grid: 16-byte header then little-endian f32.
    pub fn write_raw<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(RAW_MAGIC)?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&(self.height as u32).to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        let mut body = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            body.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.write_all(&body)?;
        Ok(())
    }

    pub fn read_raw<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 16];
        input
            .read_exact(&mut header)
            .map_err(|_| Error::Format("CHM1 header truncated".into()))?;
        if &header[..4] != RAW_MAGIC {
            return Err(Error::Format(format!(
                "expected magic \"CHM1\", found {:?}",
                String::from_utf8_lossy(&header[..4])
            )));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
        let (width, height) = (word(4), word(8));
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() != width * height * 4 {
            return Err(Error::Format(format!(
                "CHM1 body holds {} bytes, {width}x{height} grid needs {}",
                body.len(),
                width * height * 4
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(width, height, values)
    }

    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_raw(file)
    }

    pub fn load_raw(path: &Path) -> Result<Self> {
        Self::read_raw(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const RAW_MAGIC: &[u8; 4] = b"CHM1";

/// Renders `points` into a heatmap of the point set's frame.
pub fn encode(points: &PointSet, spec: &KernelSpec) -> Heatmap {
    let patch = gaussian_patch(spec);
    let (w, h) = (points.width() as i64, points.height() as i64);
    let r = patch.radius() as i64;
    let side = patch.side();
    let mut values = vec![0.0f64; points.width() * points.height()];
    for p in points.points() {
        let (cx, cy) = p.pixel();
        let y0 = (cy - r).max(0);
        let y1 = (cy + r).min(h - 1);
        let x0 = (cx - r).max(0);
        let x1 = (cx + r).min(w - 1);
        for y in y0..=y1 {
            let prow = (y - cy + r) as usize * side;
            let row = y as usize * points.width();
            for x in x0..=x1 {
                let v = patch.values[prow + (x - cx + r) as usize];
                let cell = &mut values[row + x as usize];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    Heatmap {
        width: points.width(),
        height: points.height(),
        values,
    }
}

/// Thresholded local maxima with their scores, highest first.
///
/// A pixel qualifies when its value is at least `threshold` and no pixel in
/// its `(2·min_distance+1)²` window beats it; equal values defer to the
/// smallest `(y, x)`, so a plateau inside one window yields a single peak.
pub fn decode_peaks(hm: &Heatmap, threshold: f64, min_distance: usize) -> Result<Vec<Peak>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if min_distance < 1 {
        return Err(Error::Parameter("min_distance must be >= 1".into()));
    }
    let (w, h) = (hm.width, hm.height);
    let md = min_distance;
    let mut peaks = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = hm.values[y * w + x];
            if v < threshold {
                continue;
            }
            let mut is_peak = true;
            'window: for ny in y.saturating_sub(md)..=(y + md).min(h - 1) {
                for nx in x.saturating_sub(md)..=(x + md).min(w - 1) {
                    let q = hm.values[ny * w + nx];
                    if q > v || (q == v && (ny, nx) < (y, x)) {
                        is_peak = false;
                        break 'window;
                    }
                }
            }
            if is_peak {
                peaks.push(Peak {
                    x: x as f64,
                    y: y as f64,
                    score: v,
                });
            }
        }
    }
    // Stable sort keeps raster (y, x) order among equal scores.
    peaks.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(peaks)
}

/// Decodes a heatmap into a point set in the heatmap's frame.
pub fn decode(hm: &Heatmap, threshold: f64, min_distance: usize) -> Result<PointSet> {
    let points = decode_peaks(hm, threshold, min_distance)?
        .iter()
        .map(Peak::point)
        .collect();
    PointSet::new(hm.width, hm.height, points)
}
