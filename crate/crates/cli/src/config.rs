//! The optional JSON run configuration shared by every subcommand.
//!
//! Every key is optional; a flag given on the command line wins over the
//! file, and the file wins over the built-in default. Relative paths inside
//! the file resolve against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // synthetic data
    pub seed: Option<u64>,
    pub images: Option<usize>,
    pub size: Option<usize>,
    pub blobs_min: Option<usize>,
    pub blobs_max: Option<usize>,
    pub radius_min: Option<f64>,
    pub radius_max: Option<f64>,
    pub min_separation: Option<f64>,
    pub split: Option<[f64; 3]>,

    // target kernel
    pub sigma: Option<f64>,
    pub truncation: Option<f64>,

    // network and optimizer
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub depth: Option<usize>,
    pub base_channels: Option<usize>,
    pub dropout: Option<f64>,

    // inference and evaluation
    pub threshold: Option<f64>,
    pub min_distance: Option<usize>,
    pub tile_size: Option<usize>,
    pub overlap: Option<usize>,
    pub dedupe_radius: Option<f64>,
    pub match_radius: Option<f64>,

    // paths
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("--config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("--config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.checkpoint, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Flag, then config value, then default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
