use crate::error::{Error, Result};
use crate::heatmap::Point;

/// Simple polygon, implicitly closed (the last vertex connects to the first).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Geometry(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Geometry("polygon has non-finite vertex".into()));
        }
        let poly = Self { vertices };
        if poly.signed_area() == 0.0 {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Shoelace area, positive for counter-clockwise order in a y-up frame.
    pub fn signed_area(&self) -> f64 {
        let o = self.vertices[0];
        let n = self.vertices.len();
        let mut twice = 0.0;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            twice += (a.x - o.x) * (b.y - o.y) - (b.x - o.x) * (a.y - o.y);
        }
        twice / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Vertex list rotated to start at the lexicographically smallest vertex
    /// and oriented with positive signed area. Starting point and direction
    /// of the input therefore do not change the summation order.
    fn canonical(&self) -> Vec<Point> {
        let start = self
            .vertices
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)))
            .map(|(i, _)| i)
            .unwrap();
        let n = self.vertices.len();
        let mut out: Vec<Point> = (0..n).map(|k| self.vertices[(start + k) % n]).collect();
        if self.signed_area() < 0.0 {
            out[1..].reverse();
        }
        out
    }
}

/// Area-weighted centroid.
pub fn polygon_centroid(poly: &Polygon) -> Result<Point> {
    let v = poly.canonical();
    let o = v[0];
    let n = v.len();
    let (mut twice_area, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (ax, ay) = (v[i].x - o.x, v[i].y - o.y);
        let (bx, by) = (v[(i + 1) % n].x - o.x, v[(i + 1) % n].y - o.y);
        let cross = ax * by - bx * ay;
        twice_area += cross;
        cx += (ax + bx) * cross;
        cy += (ay + by) * cross;
    }
    if twice_area == 0.0 {
        return Err(Error::Geometry("polygon has zero area".into()));
    }
    let k = 3.0 * twice_area;
    Ok(Point::new(o.x + cx / k, o.y + cy / k))
}
