use crate::error::{Error, Result};
use crate::heatmap::{Peak, Point, PointSet};

use super::image::ImageRGB;

/// One fixed-size window of a mosaic.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub origin_x: usize,
    pub origin_y: usize,
    /// Extent backed by source pixels; the rest of the tile is zero padding.
    pub valid_width: usize,
    pub valid_height: usize,
    pub image: ImageRGB,
}

impl Tile {
    pub fn contains(&self, p: &Point) -> bool {
        let (x0, y0) = (self.origin_x as f64, self.origin_y as f64);
        p.x >= x0
            && p.y >= y0
            && p.x < x0 + self.valid_width as f64
            && p.y < y0 + self.valid_height as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub tile_size: usize,
    pub overlap: usize,
    pub source_width: usize,
    pub source_height: usize,
    pub tiles: Vec<Tile>,
}

/// Tile origins along one axis: stride `tile - overlap`, with the last tile
/// shifted back to end flush at the border when the extent exceeds one tile.
pub fn tile_origins(extent: usize, tile: usize, overlap: usize) -> Result<Vec<usize>> {
    if tile == 0 || overlap >= tile {
        return Err(Error::Parameter(format!(
            "overlap must be smaller than the tile size, got overlap {overlap} with tile {tile}"
        )));
    }
    if extent <= tile {
        return Ok(vec![0]);
    }
    let stride = tile - overlap;
    let mut origins = vec![0];
    let mut o = 0;
    while o + tile < extent {
        o += stride;
        if o + tile > extent {
            o = extent - tile;
        }
        origins.push(o);
    }
    Ok(origins)
}

/// Cuts `img` into `tile_size` squares (row-major tile order).
pub fn tile_mosaic(img: &ImageRGB, tile_size: usize, overlap: usize) -> Result<TileGrid> {
    let xs = tile_origins(img.width(), tile_size, overlap)?;
    let ys = tile_origins(img.height(), tile_size, overlap)?;
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &oy in &ys {
        for &ox in &xs {
            tiles.push(Tile {
                origin_x: ox,
                origin_y: oy,
                valid_width: tile_size.min(img.width() - ox),
                valid_height: tile_size.min(img.height() - oy),
                image: img.crop_padded(ox, oy, tile_size, tile_size),
            });
        }
    }
    Ok(TileGrid {
        tile_size,
        overlap,
        source_width: img.width(),
        source_height: img.height(),
        tiles,
    })
}

impl TileGrid {
    /// Local point sets, one per tile: every point inside a tile's valid
    /// extent, translated to tile coordinates.
    pub fn assign_points(&self, points: &PointSet) -> Result<Vec<PointSet>> {
        self.tiles
            .iter()
            .map(|t| {
                let local = points
                    .points()
                    .iter()
                    .filter(|p| t.contains(p))
                    .map(|p| Point::new(p.x - t.origin_x as f64, p.y - t.origin_y as f64))
                    .collect();
                PointSet::new(self.tile_size, self.tile_size, local)
            })
            .collect()
    }

    /// Rebuilds the mosaic; the first tile to cover a pixel wins.
    pub fn reconstruct(&self) -> Result<ImageRGB> {
        let (w, h) = (self.source_width, self.source_height);
        let mut out = ImageRGB::filled(w, h, [0.0; 3])?;
        let mut written = vec![false; w * h];
        for t in &self.tiles {
            for y in 0..t.valid_height {
                for x in 0..t.valid_width {
                    let (gx, gy) = (t.origin_x + x, t.origin_y + y);
                    if !written[gy * w + gx] {
                        written[gy * w + gx] = true;
                        out.set(gx, gy, t.image.get(x, y));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Translates per-tile peaks into mosaic coordinates and collapses peaks
/// linked by distance `<= dedupe_radius` (processed in ascending distance,
/// transitively) into the single highest-scoring member.
///
/// Output is ordered by descending score, then `(y, x)`.
pub fn merge_tile_predictions(
    per_tile: &[((usize, usize), Vec<Peak>)],
    dedupe_radius: f64,
) -> Result<Vec<Peak>> {
    if dedupe_radius.is_nan() || dedupe_radius < 0.0 {
        return Err(Error::Parameter(format!(
            "dedupe radius must be >= 0, got {dedupe_radius}"
        )));
    }
    let all: Vec<Peak> = per_tile
        .iter()
        .flat_map(|((ox, oy), peaks)| {
            peaks.iter().map(move |p| Peak {
                x: p.x + *ox as f64,
                y: p.y + *oy as f64,
                score: p.score,
            })
        })
        .collect();

    let mut pairs = Vec::new();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            let d = all[i].point().distance(&all[j].point());
            if d <= dedupe_radius {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut parent: Vec<usize> = (0..all.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &(_, i, j) in &pairs {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }

    let mut best: Vec<Option<usize>> = vec![None; all.len()];
    for i in 0..all.len() {
        let root = find(&mut parent, i);
        let keep = match best[root] {
            None => true,
            Some(b) => better(&all[i], &all[b]),
        };
        if keep {
            best[root] = Some(i);
        }
    }
    let mut out: Vec<Peak> = best.into_iter().flatten().map(|i| all[i]).collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    Ok(out)
}

/// Higher score wins; ties go to the smaller `(y, x)`.
fn better(a: &Peak, b: &Peak) -> bool {
    match a.score.total_cmp(&b.score) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => (a.y, a.x) < (b.y, b.x),
    }
}
