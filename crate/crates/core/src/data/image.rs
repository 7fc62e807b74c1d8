use std::path::Path;

use crate::error::{Error, Result};
use crate::heatmap::{Point, PointSet};
use crate::nnet::{Real, Shape, Tensor};

/// RGB raster with channels in `[0, 1]`, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl ImageRGB {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Parameter(format!(
                "channel value {} at index {i} outside [0, 1]",
                pixels[i]
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let pixels = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.iter().enumerate() {
            self.pixels[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Window copy starting at `(x0, y0)`; pixels beyond the source are zero.
    pub fn crop_padded(&self, x0: usize, y0: usize, width: usize, height: usize) -> ImageRGB {
        let mut pixels = vec![0.0f32; width * height * 3];
        let cw = width.min(self.width.saturating_sub(x0));
        for y in 0..height.min(self.height.saturating_sub(y0)) {
            let src = ((y0 + y) * self.width + x0) * 3;
            let dst = y * width * 3;
            pixels[dst..dst + cw * 3].copy_from_slice(&self.pixels[src..src + cw * 3]);
        }
        ImageRGB {
            width,
            height,
            pixels,
        }
    }

    /// Planar `(1, 3, h, w)` network input.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let plane = self.width * self.height;
        let mut data = vec![T::zero(); plane * 3];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = T::from_f64_lossy(px[c] as f64);
            }
        }
        Tensor::from_vec(Shape::new(1, 3, self.height, self.width), data)
            .expect("image dims are non-zero")
    }

    /// Loads an 8-bit RGB PNG, normalizing channels by 1/255.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        let rgb = match img {
            image::DynamicImage::ImageRgb8(rgb) => rgb,
            other => {
                return Err(Error::Format(format!(
                    "{}: expected 8-bit RGB PNG, got {:?}",
                    path.display(),
                    other.color()
                )))
            }
        };
        let (w, h) = rgb.dimensions();
        let pixels = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )?;
        Ok(())
    }
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(img: &ImageRGB, new_w: usize, new_h: usize) -> Result<ImageRGB> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::Parameter(format!(
            "target size must be non-zero, got {new_w}x{new_h}"
        )));
    }
    if (new_w, new_h) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let axis = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f32) {
        let scale = src_len as f64 / dst_len as f64;
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, (s - i0 as f64) as f32)
    };
    let cols: Vec<_> = (0..new_w).map(|x| axis(x, img.width, new_w)).collect();
    let mut pixels = Vec::with_capacity(new_w * new_h * 3);
    for y in 0..new_h {
        let (y0, y1, fy) = axis(y, img.height, new_h);
        for &(x0, x1, fx) in &cols {
            let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
            for ch in 0..3 {
                // a + (b - a)·f keeps equal neighbors exact.
                let top = a[ch] + (b[ch] - a[ch]) * fx;
                let bottom = c[ch] + (d[ch] - c[ch]) * fx;
                pixels.push((top + (bottom - top) * fy).clamp(0.0, 1.0));
            }
        }
    }
    ImageRGB::new(new_w, new_h, pixels)
}

/// Rescales point coordinates by `new / old` per axis into a new frame.
pub fn scale_points(points: &PointSet, new_w: usize, new_h: usize) -> Result<PointSet> {
    let sx = new_w as f64 / points.width() as f64;
    let sy = new_h as f64 / points.height() as f64;
    let scaled = points
        .points()
        .iter()
        .map(|p| Point::new(p.x * sx, p.y * sy))
        .collect();
    PointSet::new(new_w, new_h, scaled)
}
