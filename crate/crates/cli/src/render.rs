use centroid_core::data::ImageRGB;
use centroid_core::heatmap::Point;

const ARM: i64 = 4;
const COLOR: [f32; 3] = [1.0, 0.0, 0.0];

/// Copy of `img` with a cross drawn at every point.
pub fn overlay(img: &ImageRGB, points: &[Point]) -> ImageRGB {
    let mut out = img.clone();
    let (w, h) = (img.width() as i64, img.height() as i64);
    for p in points {
        let (cx, cy) = p.pixel();
        for d in -ARM..=ARM {
            for (x, y) in [(cx + d, cy), (cx, cy + d)] {
                if (0..w).contains(&x) && (0..h).contains(&y) {
                    out.set(x as usize, y as usize, COLOR);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_clipped_at_borders() {
        let img = ImageRGB::filled(10, 10, [0.0; 3]).unwrap();
        let out = overlay(&img, &[Point::new(1.0, 1.0)]);
        assert_eq!(out.get(1, 1), COLOR);
        assert_eq!(out.get(5, 1), COLOR);
        assert_eq!(out.get(1, 0), COLOR);
        assert_eq!(out.get(6, 1), [0.0; 3]);
        assert_eq!(out.get(2, 2), [0.0; 3]);
    }
}
