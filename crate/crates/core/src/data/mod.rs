//! Imagery, ground truth, tiling and synthetic datasets.

mod image;
mod io;
mod polygon;
mod split;
mod synth;
mod tiling;

pub use self::image::{resize_bilinear, scale_points, ImageRGB};
pub use io::{
    geojson_points_string, parse_geojson_points, parse_geojson_polygons, parse_points_csv,
    points_csv_string, read_labels, read_points_csv, write_points_csv, Manifest, ManifestRecord,
};
pub use polygon::{polygon_centroid, Polygon};
pub use split::{split_dataset, split_explicit, Split, SplitTag};
pub use synth::{synth_dataset, Sample, SynthConfig};
pub use tiling::{merge_tile_predictions, tile_mosaic, tile_origins, Tile, TileGrid};
