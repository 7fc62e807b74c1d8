use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use centroid_core::data::{
    read_labels, split_dataset, synth_dataset, write_points_csv, ImageRGB, Manifest, ManifestRecord,
    SplitTag, SynthConfig,
};
use centroid_core::eval::{evaluate_dataset, MetricsReport};
use centroid_core::heatmap::{encode as encode_points, Heatmap, KernelSpec, Point, PointSet};
use centroid_core::nnet::{load_checkpoint, save_checkpoint, AdamConfig, UNetConfig};
use centroid_core::trainer::{predict as run_predict, train_with_progress, PredictOptions, TilingOptions, TrainConfig};

use crate::config::{pick, RunConfig};
use crate::render::overlay;
use crate::{EncodeArgs, EvaluateArgs, PredictArgs, SynthArgs, TrainArgs};

const DEFAULT_SIGMA: f64 = 10.0;

fn kernel(sigma: Option<f64>, truncation: Option<f64>, cfg: &RunConfig) -> Result<KernelSpec> {
    let sigma = pick(sigma, cfg.sigma, DEFAULT_SIGMA);
    let truncation = pick(truncation, cfg.truncation, KernelSpec::DEFAULT_TRUNCATION);
    KernelSpec::new(sigma, truncation).context("--sigma / --truncation")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("--out-dir {}: cannot create directory", dir.display()))
}

fn parse_split(flag: Option<&str>) -> Result<SplitTag> {
    SplitTag::from_str(flag.unwrap_or("test")).context("--split")
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| anyhow!("{}: cannot derive a file stem", path.display()))
}

pub fn synth(a: &SynthArgs, cfg: &RunConfig) -> Result<()> {
    let d = SynthConfig::default();
    let size = pick(a.size, cfg.size, d.width);
    let synth_cfg = SynthConfig {
        seed: pick(a.seed, cfg.seed, d.seed),
        n_images: pick(a.images, cfg.images, d.n_images),
        width: size,
        height: size,
        blobs_per_image: (
            pick(a.blobs_min, cfg.blobs_min, d.blobs_per_image.0),
            pick(a.blobs_max, cfg.blobs_max, d.blobs_per_image.1),
        ),
        blob_radius: (
            pick(a.radius_min, cfg.radius_min, d.blob_radius.0),
            pick(a.radius_max, cfg.radius_max, d.blob_radius.1),
        ),
        min_separation: pick(a.min_separation, cfg.min_separation, d.min_separation),
    };
    let fractions = match (&a.split, cfg.split) {
        (Some(v), _) => *v,
        (None, Some(v)) => v,
        (None, None) => [0.8, 0.0, 0.2],
    };
    let out = pick(a.out_dir.clone(), cfg.out_dir.clone(), PathBuf::from("synth"));
    synth_cfg.validate()?;

    let indices: Vec<usize> = (0..synth_cfg.n_images).collect();
    let split = split_dataset(indices, (fractions[0], fractions[1], fractions[2]), synth_cfg.seed)
        .context("--split")?;
    let mut tags = vec![SplitTag::Train; synth_cfg.n_images];
    for (tag, idx) in [(SplitTag::Train, &split.train), (SplitTag::Val, &split.val), (SplitTag::Test, &split.test)] {
        for &i in idx {
            tags[i] = tag;
        }
    }

    create_dir(&out.join("images"))?;
    create_dir(&out.join("labels"))?;
    let samples = synth_dataset(&synth_cfg)?;
    let mut records = Vec::with_capacity(samples.len());
    for (i, (s, tag)) in samples.iter().zip(&tags).enumerate() {
        let image_path = format!("images/{i:04}.png");
        let labels_path = format!("labels/{i:04}.csv");
        s.image.save_png(&out.join(&image_path))?;
        write_points_csv(&out.join(&labels_path), s.points.points())?;
        records.push(ManifestRecord { image_path, labels_path, split: *tag });
    }
    let manifest = Manifest { root: out.clone(), records };
    std::fs::write(out.join("manifest.json"), manifest.to_json())?;
    println!(
        "wrote {} images to {} ({} train, {} val, {} test)",
        samples.len(),
        out.display(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}

pub fn encode(a: &EncodeArgs, cfg: &RunConfig) -> Result<()> {
    let spec = kernel(a.sigma, a.truncation, cfg)?;
    let points = read_labels(&a.points).with_context(|| format!("--points {}", a.points.display()))?;
    let points = PointSet::new(a.width, a.height, points).context("--points / --width / --height")?;
    let hm = encode_points(&points, &spec);
    let raw = a.raw.clone().unwrap_or_else(|| a.out.with_extension("chm1"));
    hm.save_png(&a.out).with_context(|| format!("--out {}", a.out.display()))?;
    hm.save_raw(&raw).with_context(|| format!("--raw {}", raw.display()))?;
    println!("encoded {} points into {} and {}", points.len(), a.out.display(), raw.display());
    Ok(())
}

pub fn train(a: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let manifest_path = a
        .manifest
        .clone()
        .or(cfg.manifest.clone())
        .ok_or_else(|| anyhow!("--manifest is required (flag or config key \"manifest\")"))?;
    let out = pick(a.out_dir.clone(), cfg.out_dir.clone(), PathBuf::from("run"));
    let kernel = kernel(a.sigma, a.truncation, cfg)?;
    let d = UNetConfig::default();
    let seed = pick(a.seed, cfg.seed, 7);
    let train_cfg = TrainConfig {
        epochs: pick(a.epochs, cfg.epochs, 30),
        batch_size: 1,
        adam: AdamConfig {
            lr: pick(a.learning_rate, cfg.learning_rate, AdamConfig::default().lr),
            ..AdamConfig::default()
        },
        kernel,
        unet: UNetConfig {
            depth: pick(a.depth, cfg.depth, d.depth),
            base_channels: pick(a.base_channels, cfg.base_channels, d.base_channels),
            in_channels: 3,
            dropout_rate: pick(a.dropout, cfg.dropout, d.dropout_rate),
            seed,
        },
        seed,
        checkpoint_path: Some(out.join("model.cunw")),
    };
    train_cfg.validate()?;

    let manifest = Manifest::load(&manifest_path).with_context(|| format!("--manifest {}", manifest_path.display()))?;
    let train_set = manifest
        .load_split(SplitTag::Train)
        .with_context(|| format!("--manifest {}", manifest_path.display()))?;
    let val_set = manifest
        .load_split(SplitTag::Val)
        .with_context(|| format!("--manifest {}", manifest_path.display()))?;
    if train_set.is_empty() {
        bail!("--manifest {}: no records in the train split", manifest_path.display());
    }
    create_dir(&out)?;

    let quiet = a.quiet;
    let outcome = train_with_progress(&train_cfg, &train_set, &val_set, |r| {
        if !quiet {
            eprintln!(
                "epoch {:>3}  train {:.6}  val {:.6}  {:.1}s",
                r.epoch, r.train_loss, r.val_loss, r.wall_seconds
            );
        }
    })?;
    save_checkpoint(&outcome.last, &outcome.meta, &out.join("last.cunw"))?;
    std::fs::write(out.join("history.csv"), outcome.history.to_csv())?;
    match outcome.best_epoch {
        Some(e) => println!(
            "trained {} epochs on {} images; best epoch {e} -> {}",
            train_cfg.epochs,
            train_set.len(),
            out.join("model.cunw").display()
        ),
        None => println!("no epochs run; initial weights -> {}", out.join("model.cunw").display()),
    }
    Ok(())
}

fn predict_options(a: &PredictArgs, cfg: &RunConfig, meta_opts: PredictOptions, kernel: &KernelSpec) -> PredictOptions {
    let default_tiling = meta_opts.tiling.unwrap_or(TilingOptions::for_kernel(128, kernel));
    let tiling = TilingOptions {
        tile_size: pick(a.tile_size, cfg.tile_size, default_tiling.tile_size),
        overlap: pick(a.overlap, cfg.overlap, default_tiling.overlap),
        dedupe_radius: pick(a.dedupe_radius, cfg.dedupe_radius, default_tiling.dedupe_radius),
    };
    PredictOptions {
        threshold: pick(a.threshold, cfg.threshold, meta_opts.threshold),
        min_distance: pick(a.min_distance, cfg.min_distance, meta_opts.min_distance),
        tiling: (!a.no_tiling).then_some(tiling),
    }
}

fn write_heatmap_png(hm: &Heatmap, path: &Path) -> Result<()> {
    hm.save_png(path).with_context(|| format!("writing {}", path.display()))
}

pub fn predict(a: &PredictArgs, cfg: &RunConfig) -> Result<()> {
    let ckpt = a
        .checkpoint
        .clone()
        .or(cfg.checkpoint.clone())
        .ok_or_else(|| anyhow!("--checkpoint is required (flag or config key \"checkpoint\")"))?;
    let out = pick(a.out_dir.clone(), cfg.out_dir.clone(), PathBuf::from("predictions"));
    let (model, meta) = load_checkpoint(&ckpt).with_context(|| format!("--checkpoint {}", ckpt.display()))?;
    let opts = predict_options(a, cfg, PredictOptions::for_meta(&meta), &meta.kernel);

    let jobs: Vec<(PathBuf, String)> = match (&a.image, a.manifest.clone().or(cfg.manifest.clone())) {
        (Some(img), _) => vec![(img.clone(), "--image".to_owned())],
        (None, Some(m)) => {
            let split = parse_split(a.split.as_deref())?;
            let manifest = Manifest::load(&m).with_context(|| format!("--manifest {}", m.display()))?;
            manifest
                .records_in(split)
                .map(|r| (manifest.image_path(r), format!("--manifest {}", m.display())))
                .collect()
        }
        (None, None) => bail!("either --image or --manifest is required"),
    };
    for (path, _) in &jobs {
        if !path.is_file() {
            bail!("{}: no such image", path.display());
        }
    }
    create_dir(&out)?;

    let mut total = 0;
    for (path, flag) in &jobs {
        let name = stem(path)?;
        let img = ImageRGB::load_png(path).with_context(|| format!("{flag}: {}", path.display()))?;
        let p = run_predict(&model, &img, &opts).with_context(|| format!("{flag}: {}", path.display()))?;
        write_points_csv(&out.join(format!("{name}.csv")), p.points.points())?;
        write_heatmap_png(&p.heatmap, &out.join(format!("{name}_heatmap.png")))?;
        overlay(&img, p.points.points()).save_png(&out.join(format!("{name}_overlay.png")))?;
        total += p.points.len();
    }
    println!("predicted {total} points in {} images -> {}", jobs.len(), out.display());
    Ok(())
}

fn read_points(path: &Path, flag: &str) -> Result<Vec<Point>> {
    read_labels(path).with_context(|| format!("{flag} {}", path.display()))
}

pub fn evaluate(a: &EvaluateArgs, cfg: &RunConfig) -> Result<()> {
    let radius = a
        .radius
        .or(cfg.match_radius)
        .unwrap_or(cfg.sigma.unwrap_or(DEFAULT_SIGMA));
    let (preds, gts) = match (&a.pred, &a.gt, a.manifest.clone().or(cfg.manifest.clone())) {
        (Some(p), Some(g), _) => (vec![read_points(p, "--pred")?], vec![read_points(g, "--gt")?]),
        (None, _, Some(m)) => {
            let dir = a
                .pred_dir
                .clone()
                .ok_or_else(|| anyhow!("--pred-dir is required with --manifest"))?;
            let split = parse_split(a.split.as_deref())?;
            let manifest = Manifest::load(&m).with_context(|| format!("--manifest {}", m.display()))?;
            let mut preds = Vec::new();
            let mut gts = Vec::new();
            for r in manifest.records_in(split) {
                let name = stem(Path::new(&r.image_path))?;
                preds.push(read_points(&dir.join(format!("{name}.csv")), "--pred-dir")?);
                gts.push(read_points(&manifest.labels_path(r), "--manifest")?);
            }
            (preds, gts)
        }
        _ => bail!("either --pred with --gt, or --manifest with --pred-dir is required"),
    };
    let eval = evaluate_dataset(&preds, &gts, radius).context("--radius")?;
    let json = MetricsReport::new(&eval, radius).to_json();
    if let Some(path) = &a.out {
        std::fs::write(path, &json).with_context(|| format!("--out {}", path.display()))?;
    }
    print!("{json}");
    Ok(())
}
