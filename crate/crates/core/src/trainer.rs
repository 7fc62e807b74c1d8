//! Training loop and image-to-points inference.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{merge_tile_predictions, tile_mosaic, ImageRGB, Sample};
use crate::error::{Error, Result};
use crate::heatmap::{decode_peaks, encode, Heatmap, KernelSpec, Peak, PointSet};
use crate::nnet::{
    mse_loss, save_checkpoint, AdamConfig, AdamState, Mode, ModelMeta, Shape, Tensor, UNet, UNetConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Only 1 is supported.
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub kernel: KernelSpec,
    pub unet: UNetConfig,
    /// Drives the epoch shuffles and dropout masks.
    pub seed: u64,
    /// Best-on-validation weights are written here whenever they improve.
    pub checkpoint_path: Option<PathBuf>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size != 1 {
            return Err(Error::Parameter(format!(
                "batch_size must be 1, got {}",
                self.batch_size
            )));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate must be > 0, got {}", a.lr)));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::Parameter("adam betas must lie in [0, 1) and epsilon > 0".into()));
        }
        self.unet.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss,wall_seconds`, epochs numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,wall_seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.wall_seconds
            ));
        }
        out
    }

    /// Loss columns only, for comparisons where wall time is noise.
    pub fn losses(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.train_loss, r.val_loss)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Lowest validation loss seen (the initial weights when `epochs == 0`).
    pub best: UNet<f32>,
    pub best_epoch: Option<usize>,
    /// Weights after the final epoch.
    pub last: UNet<f32>,
    pub history: TrainHistory,
    pub adam_steps: u64,
    pub meta: ModelMeta,
}

struct Prepared {
    input: Tensor<f32>,
    target: Tensor<f32>,
}

fn prepare(samples: &[Sample], kernel: &KernelSpec) -> Vec<Prepared> {
    samples
        .iter()
        .map(|s| {
            let hm = encode(&s.points, kernel);
            let target = Tensor::from_vec(
                Shape::new(1, 1, hm.height(), hm.width()),
                hm.values().iter().map(|&v| v as f32).collect(),
            )
            .expect("heatmap dims are non-zero");
            Prepared {
                input: s.image.to_tensor(),
                target,
            }
        })
        .collect()
}

/// Mean eval-mode loss over `items`.
fn mean_eval_loss(model: &UNet<f32>, items: &[Prepared]) -> Result<f64> {
    let mut total = 0.0f64;
    for item in items {
        let out = model.predict(&item.input)?;
        let (loss, _) = mse_loss(&out, &item.target)?;
        total += loss as f64;
    }
    Ok(total / items.len() as f64)
}

fn check_samples(cfg: &TrainConfig, set: &[Sample], what: &str, dims: (usize, usize)) -> Result<()> {
    for (i, s) in set.iter().enumerate() {
        let (w, h) = (s.image.width(), s.image.height());
        if (w, h) != dims {
            return Err(Error::Shape(format!(
                "{what} item {i} is {w}x{h}, expected {}x{}",
                dims.0, dims.1
            )));
        }
        if (s.points.width(), s.points.height()) != (w, h) {
            return Err(Error::Shape(format!("{what} item {i}: label frame differs from image")));
        }
    }
    if cfg.unet.in_channels != 3 {
        return Err(Error::Shape(format!(
            "RGB input needs in_channels = 3, config has {}",
            cfg.unet.in_channels
        )));
    }
    cfg.unet.check_dims(dims.1, dims.0)
}

pub fn train(cfg: &TrainConfig, train_set: &[Sample], val_set: &[Sample]) -> Result<TrainOutcome> {
    train_with_progress(cfg, train_set, val_set, |_| {})
}

/// Batch-size-1 training: per epoch a seeded shuffle, then for every item a
/// train-mode forward, MSE against the encoded labels, a full backward pass
/// and one Adam step; afterwards the validation loss in eval mode. An empty
/// validation set falls back to the eval-mode loss on the training set.
pub fn train_with_progress(
    cfg: &TrainConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let Some(first) = train_set.first() else {
        return Err(Error::Parameter("training set is empty".into()));
    };
    let dims = (first.image.width(), first.image.height());
    check_samples(cfg, train_set, "training", dims)?;
    check_samples(cfg, val_set, "validation", dims)?;

    let meta = ModelMeta {
        unet: cfg.unet,
        kernel: cfg.kernel,
        tile_width: dims.0,
        tile_height: dims.1,
    };
    let mut model = UNet::<f32>::new(cfg.unet)?;
    let mut adam = AdamState::new(cfg.adam, model.params.trainable().iter().map(|t| t.len()));
    let train_items = prepare(train_set, &cfg.kernel);
    let val_items = if val_set.is_empty() {
        None
    } else {
        Some(prepare(val_set, &cfg.kernel))
    };

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_items.len()).collect();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        for &i in &order {
            let item = &train_items[i];
            let trace = model.forward(&item.input, Mode::Train, &mut dropout_rng)?;
            let (loss, grad) = mse_loss(trace.output(), &item.target)?;
            let (grads, _) = model.backward(&trace, &grad)?;
            model.commit_running_stats(&trace);
            adam.step(&mut model.params.trainable_mut(), &grads.trainable())?;
            loss_sum += loss as f64;
        }
        let train_loss = loss_sum / train_items.len() as f64;
        let val_loss = mean_eval_loss(&model, val_items.as_deref().unwrap_or(&train_items))?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Internal(format!("non-finite loss at epoch {epoch}")));
        }
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = Some(epoch);
            best = model.clone();
            if let Some(path) = &cfg.checkpoint_path {
                save_checkpoint(&best, &meta, path)?;
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.records.push(record);
    }
    if cfg.epochs == 0 {
        if let Some(path) = &cfg.checkpoint_path {
            save_checkpoint(&best, &meta, path)?;
        }
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        history,
        adam_steps: adam.t,
        meta,
    })
}

/// Eval-mode validation loss; bit-reproducible for fixed weights.
pub fn validation_loss(model: &UNet<f32>, kernel: &KernelSpec, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Parameter("no samples to evaluate".into()));
    }
    mean_eval_loss(model, &prepare(samples, kernel))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TilingOptions {
    pub tile_size: usize,
    pub overlap: usize,
    pub dedupe_radius: f64,
}

impl TilingOptions {
    /// Tile of `tile_size`, overlap `2 × support radius`, dedupe at σ.
    pub fn for_kernel(tile_size: usize, kernel: &KernelSpec) -> Self {
        Self {
            tile_size,
            overlap: 2 * kernel.radius(),
            dedupe_radius: kernel.sigma(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictOptions {
    pub threshold: f64,
    pub min_distance: usize,
    /// `None` runs the whole image in one pass.
    pub tiling: Option<TilingOptions>,
}

impl PredictOptions {
    pub fn for_meta(meta: &ModelMeta) -> Self {
        Self {
            threshold: 0.5,
            min_distance: (meta.kernel.sigma().round() as usize).max(1),
            tiling: Some(TilingOptions::for_kernel(
                meta.tile_width.min(meta.tile_height),
                &meta.kernel,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Network output over the whole image; in tiled mode each pixel comes
    /// from the first tile whose trimmed core covers it.
    pub heatmap: Heatmap,
    pub peaks: Vec<Peak>,
    pub points: PointSet,
}

/// Runs the network on a whole image and returns its heatmap.
pub fn infer_heatmap(model: &UNet<f32>, img: &ImageRGB) -> Result<Heatmap> {
    let out = model.predict(&img.to_tensor::<f32>())?;
    Heatmap::new(
        img.width(),
        img.height(),
        out.data().iter().map(|&v| v as f64).collect(),
    )
}

pub fn predict(model: &UNet<f32>, img: &ImageRGB, opts: &PredictOptions) -> Result<Prediction> {
    let direct = |img: &ImageRGB| -> Result<Prediction> {
        let hm = infer_heatmap(model, img)?;
        let peaks = decode_peaks(&hm, opts.threshold, opts.min_distance)?;
        let points = PointSet::new(img.width(), img.height(), peaks.iter().map(Peak::point).collect())?;
        Ok(Prediction {
            heatmap: hm,
            peaks,
            points,
        })
    };
    let Some(tiling) = opts.tiling else {
        return direct(img);
    };
    let fits = img.width() <= tiling.tile_size && img.height() <= tiling.tile_size;
    if fits && model.config.check_dims(img.height(), img.width()).is_ok() {
        return direct(img);
    }
    model.config.check_dims(tiling.tile_size, tiling.tile_size)?;

    let grid = tile_mosaic(img, tiling.tile_size, tiling.overlap)?;
    let mut per_tile = Vec::with_capacity(grid.tiles.len());
    let (w, h) = (img.width(), img.height());
    let mut values = vec![0.0f64; w * h];
    let mut written = vec![false; w * h];
    let margin = tiling.overlap / 2;
    // Half the overlap is trimmed from every edge shared with another tile;
    // the trimmed cores still cover the image.
    let core = |origin: usize, valid: usize, extent: usize| {
        let lo = if origin > 0 { margin } else { 0 };
        let hi = if origin + valid < extent { valid - margin } else { valid };
        lo..hi
    };
    for tile in &grid.tiles {
        let hm = infer_heatmap(model, &tile.image)?;
        let (xs, ys) = (
            core(tile.origin_x, tile.valid_width, w),
            core(tile.origin_y, tile.valid_height, h),
        );
        let peaks: Vec<Peak> = decode_peaks(&hm, opts.threshold, opts.min_distance)?
            .into_iter()
            .filter(|p| xs.contains(&(p.x as usize)) && ys.contains(&(p.y as usize)))
            .collect();
        for y in ys.clone() {
            for x in xs.clone() {
                let i = (tile.origin_y + y) * w + tile.origin_x + x;
                if !written[i] {
                    written[i] = true;
                    values[i] = hm.get(x, y);
                }
            }
        }
        per_tile.push(((tile.origin_x, tile.origin_y), peaks));
    }
    let peaks = merge_tile_predictions(&per_tile, tiling.dedupe_radius)?;
    let points = PointSet::new(img.width(), img.height(), peaks.iter().map(Peak::point).collect())?;
    Ok(Prediction {
        heatmap: Heatmap::new(w, h, values)?,
        peaks,
        points,
    })
}
