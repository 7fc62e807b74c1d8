//! Label files and dataset manifests.
//!
//! - points CSV: header `x,y`, one point per row, pixel units.
//! - GeoJSON: `FeatureCollection` of `Point` or `Polygon` geometries in pixel
//!   coordinates (no CRS handling). Polygons contribute their centroid.
//! - manifest: JSON array of `{image_path, labels_path, split}` records,
//!   paths relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::image::ImageRGB;
use super::polygon::{polygon_centroid, Polygon};
use super::split::SplitTag;
use super::synth::Sample;
use crate::error::{Error, Result};
use crate::heatmap::{Point, PointSet};

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses an `x,y` CSV. A zero-byte input means no points.
pub fn parse_points_csv(text: &str, path: &Path) -> Result<Vec<Point>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
        return Err(parse_error(path, 1, format!("expected header \"x,y\", found {headers:?}")));
    }
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(parse_error(path, line, format!("expected 2 fields, found {}", record.len())));
        }
        let coord = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(path, line, format!("invalid number {:?}", &record[i])))
        };
        points.push(Point::new(coord(0)?, coord(1)?));
    }
    Ok(points)
}

pub fn read_points_csv(path: &Path) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path)?;
    parse_points_csv(&text, path)
}

pub fn points_csv_string(points: &[Point]) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.x, p.y));
    }
    out
}

pub fn write_points_csv(path: &Path, points: &[Point]) -> Result<()> {
    std::fs::write(path, points_csv_string(points))?;
    Ok(())
}

fn coord_pair(v: &Value) -> Option<Point> {
    let a = v.as_array()?;
    if a.len() < 2 {
        return None;
    }
    Some(Point::new(a[0].as_f64()?, a[1].as_f64()?))
}

fn features(doc: &Value) -> Result<&Vec<Value>> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Format("GeoJSON root must be a FeatureCollection".into()));
    }
    doc.get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Format("FeatureCollection without a features array".into()))
}

fn geometry(feature: &Value, i: usize) -> Result<(&str, &Value)> {
    let geom = feature
        .get("geometry")
        .ok_or_else(|| Error::Format(format!("feature {i} has no geometry")))?;
    let kind = geom
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Format(format!("feature {i} geometry has no type")))?;
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| Error::Format(format!("feature {i} geometry has no coordinates")))?;
    Ok((kind, coords))
}

fn ring_to_polygon(ring: &Value, i: usize) -> Result<Polygon> {
    let mut vertices = ring
        .as_array()
        .ok_or_else(|| Error::Format(format!("feature {i}: polygon ring is not an array")))?
        .iter()
        .map(|c| coord_pair(c).ok_or_else(|| Error::Format(format!("feature {i}: bad coordinate"))))
        .collect::<Result<Vec<_>>>()?;
    if vertices.len() > 1 && vertices.first() == vertices.last() {
        vertices.pop();
    }
    Polygon::new(vertices)
}

/// Polygon geometries (outer rings) of a FeatureCollection.
pub fn parse_geojson_polygons(text: &str) -> Result<Vec<Polygon>> {
    let doc: Value = serde_json::from_str(text)?;
    let mut out = Vec::new();
    for (i, f) in features(&doc)?.iter().enumerate() {
        let (kind, coords) = geometry(f, i)?;
        if kind != "Polygon" {
            return Err(Error::Format(format!("feature {i}: expected Polygon, found {kind}")));
        }
        let outer = coords
            .as_array()
            .and_then(|rings| rings.first())
            .ok_or_else(|| Error::Format(format!("feature {i}: polygon without rings")))?;
        out.push(ring_to_polygon(outer, i)?);
    }
    Ok(out)
}

/// Centroid labels from a FeatureCollection: `Point` features as-is,
/// `Polygon` features reduced to their area-weighted centroid.
pub fn parse_geojson_points(text: &str) -> Result<Vec<Point>> {
    let doc: Value = serde_json::from_str(text)?;
    let mut out = Vec::new();
    for (i, f) in features(&doc)?.iter().enumerate() {
        match geometry(f, i)? {
            ("Point", coords) => out.push(
                coord_pair(coords).ok_or_else(|| Error::Format(format!("feature {i}: bad Point")))?,
            ),
            ("Polygon", coords) => {
                let outer = coords
                    .as_array()
                    .and_then(|rings| rings.first())
                    .ok_or_else(|| Error::Format(format!("feature {i}: polygon without rings")))?;
                out.push(polygon_centroid(&ring_to_polygon(outer, i)?)?);
            }
            (kind, _) => {
                return Err(Error::Format(format!("feature {i}: unsupported geometry {kind}")))
            }
        }
    }
    Ok(out)
}

pub fn geojson_points_string(points: &[Point]) -> String {
    let features: Vec<Value> = points
        .iter()
        .map(|p| {
            json!({
                "type": "Feature",
                "properties": {},
                "geometry": {"type": "Point", "coordinates": [p.x, p.y]},
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({"type": "FeatureCollection", "features": features}))
        .expect("serializable")
}

/// Reads label points from `.csv` or `.geojson` / `.json`.
pub fn read_labels(path: &Path) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => parse_points_csv(&text, path),
        Some("geojson") | Some("json") => parse_geojson_points(&text),
        _ => Err(Error::Format(format!(
            "{}: unknown label format (expected .csv or .geojson)",
            path.display()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub image_path: String,
    pub labels_path: String,
    pub split: SplitTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let records: Vec<ManifestRecord> = serde_json::from_str(&text)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { root, records })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("serializable") + "\n"
    }

    pub fn image_path(&self, r: &ManifestRecord) -> PathBuf {
        self.root.join(&r.image_path)
    }

    pub fn labels_path(&self, r: &ManifestRecord) -> PathBuf {
        self.root.join(&r.labels_path)
    }

    pub fn records_in(&self, split: SplitTag) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Loads image and labels for one record.
    pub fn load_sample(&self, r: &ManifestRecord) -> Result<Sample> {
        let image = ImageRGB::load_png(&self.image_path(r))?;
        let points = read_labels(&self.labels_path(r))?;
        let points = PointSet::new(image.width(), image.height(), points)?;
        Ok(Sample { image, points })
    }

    pub fn load_split(&self, split: SplitTag) -> Result<Vec<Sample>> {
        self.records_in(split).map(|r| self.load_sample(r)).collect()
    }
}
