//! End-to-end acceptance run: every criterion is evaluated at its stated
//! tolerance and reported as one PASS / FAIL line.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use centroid_core::data::{split_dataset, synth_dataset, Sample, SynthConfig};
use centroid_core::eval::{evaluate_dataset, match_points, metrics_from_counts, MetricsReport};
use centroid_core::heatmap::{decode, encode, KernelSpec, Point, PointSet};
use centroid_core::nnet::{write_checkpoint, AdamConfig, AdamState, UNet, UNetConfig};
use centroid_core::trainer::{predict, train, PredictOptions, TilingOptions, TrainConfig, TrainOutcome};
use common::{encode_oracle, gradcheck, rng};
use rand::Rng;

/// Written to the raw stderr handle so the lines survive libtest capture.
fn emit(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

#[derive(Default)]
struct Report {
    lines: Vec<String>,
    failures: usize,
}

impl Report {
    fn run(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut o = f();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > b {
                o.pass = false;
                o.detail += &format!("; over budget {:.0?}", b);
            }
        }
        let line = format!(
            "{} [{id}] {name}: {} ({:.1?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            took
        );
        emit(&line);
        if !o.pass {
            self.failures += 1;
        }
        self.lines.push(line);
    }
}

fn codec_oracle() -> Outcome {
    let mut r = rng(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (w, h) = (r.gen_range(1..=32), r.gen_range(1..=32));
        let n = r.gen_range(0..=8);
        let pts: Vec<Point> = (0..n)
            .map(|_| Point::new(r.gen_range(0.0..w as f64 - 0.5), r.gen_range(0.0..h as f64 - 0.5)))
            .collect();
        let Ok(ps) = PointSet::new(w, h, pts) else { continue };
        let spec = KernelSpec::new(r.gen_range(0.5..6.0), r.gen_range(1.0..4.0)).unwrap();
        let hm = encode(&ps, &spec);
        let want = encode_oracle(ps.points(), w, h, &spec);
        for (a, b) in hm.values().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max abs deviation {worst:e} over 200 sets"))
}

fn round_trips() -> Outcome {
    let mut r = rng(1002);
    let mut failures = 0;
    for _ in 0..1000 {
        let spec = KernelSpec::with_sigma(r.gen_range(1.0..4.0)).unwrap();
        let rad = spec.radius() as f64;
        let sep = 2.0 * rad + 1.0;
        let n = r.gen_range(1..=10);
        let mut pts: Vec<Point> = Vec::new();
        while pts.len() < n {
            let p = Point::new(
                r.gen_range(rad..128.0 - 1.0 - rad).round(),
                r.gen_range(rad..128.0 - 1.0 - rad).round(),
            );
            if pts.iter().all(|q| q.distance(&p) > sep) {
                pts.push(p);
            }
        }
        let back = decode(&encode(&PointSet::new(128, 128, pts.clone()).unwrap(), &spec), 0.5, 1).unwrap();
        let mut got: Vec<_> = back.points().iter().map(Point::pixel).collect();
        let mut want: Vec<_> = pts.iter().map(Point::pixel).collect();
        got.sort_unstable();
        want.sort_unstable();
        if got != want {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{failures} of 1000 sets differ"))
}

fn gradient_suite() -> Outcome {
    let results = gradcheck::suite();
    let (name, worst) = results.iter().fold(("", 0.0f64), |acc, &(n, e)| if e > acc.1 { (n, e) } else { acc });
    outcome(
        results.iter().all(|&(_, e)| e < 1e-4),
        format!("{} checks, worst {worst:e} ({name})", results.len()),
    )
}

fn adam_closed_form() -> Outcome {
    let cfg = AdamConfig::default();
    let grads = [0.5, -3.0, 1e-4, 12.0];
    let mut state = AdamState::<f64>::new(cfg, [grads.len()]);
    let mut p = vec![0.0; grads.len()];
    state.step(&mut [&mut p[..]], &[&grads[..]]).unwrap();
    let first = p
        .iter()
        .zip(grads)
        .map(|(d, g)| (d - -cfg.lr * g / (g.abs() + cfg.epsilon)).abs())
        .fold(0.0, f64::max);

    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let mut state = AdamState::<f64>::new(cfg, [1]);
    let mut q = [0.0];
    for _ in 0..2 {
        state.step(&mut [&mut q[..]], &[&[1.0][..]]).unwrap();
    }
    let m2 = (1.0 - b1) * (1.0 + b1) / (1.0 - b1 * b1);
    let v2 = (1.0 - b2) * (1.0 + b2) / (1.0 - b2 * b2);
    let want = -(cfg.lr / (1.0 + cfg.epsilon) + cfg.lr * m2 / (v2.sqrt() + cfg.epsilon));
    let second = (q[0] - want).abs();
    outcome(
        first <= 1e-9 && second <= 1e-12,
        format!("first step {first:e}, two steps {second:e}"),
    )
}

fn published_f1() -> Outcome {
    let f1 = |p: f64, r: f64| {
        let tp = 1_000_000usize;
        let fp = (tp as f64 / p - tp as f64).round() as usize;
        let fn_ = (tp as f64 / r - tp as f64).round() as usize;
        metrics_from_counts(tp, fp, fn_).f1
    };
    let (a, b) = (f1(0.935, 0.637), f1(0.845, 0.833));
    outcome(
        (a - 0.758).abs() <= 1e-3 && (b - 0.839).abs() <= 1e-3,
        format!("buildings {a:.4}, coconuts {b:.4}"),
    )
}

const SIGMA: f64 = 5.0;
const MATCH_RADIUS: f64 = 5.0;

struct BenchRun {
    outcome: TrainOutcome,
    checkpoint: Vec<u8>,
    report: MetricsReport,
}

fn benchmark_data() -> (Vec<Sample>, Vec<Sample>) {
    let samples = synth_dataset(&SynthConfig { seed: 7, n_images: 80, ..SynthConfig::default() }).unwrap();
    let split = split_dataset(samples, (0.8, 0.0, 0.2), 7).unwrap();
    (split.train, split.test)
}

fn benchmark_config() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        batch_size: 1,
        adam: AdamConfig::default(),
        kernel: KernelSpec::with_sigma(SIGMA).unwrap(),
        unet: UNetConfig { depth: 3, base_channels: 8, in_channels: 3, dropout_rate: 0.2, seed: 7 },
        seed: 7,
        checkpoint_path: None,
    }
}

fn point_opts() -> PredictOptions {
    PredictOptions { threshold: 0.5, min_distance: SIGMA as usize, tiling: None }
}

fn run_benchmark(train_set: &[Sample], test_set: &[Sample]) -> BenchRun {
    let outcome = train(&benchmark_config(), train_set, &[]).unwrap();
    let preds: Vec<Vec<Point>> = test_set
        .iter()
        .map(|s| predict(&outcome.best, &s.image, &point_opts()).unwrap().points.into_points())
        .collect();
    let gts: Vec<Vec<Point>> = test_set.iter().map(|s| s.points.points().to_vec()).collect();
    let report = MetricsReport::new(&evaluate_dataset(&preds, &gts, MATCH_RADIUS).unwrap(), MATCH_RADIUS);
    let mut checkpoint = Vec::new();
    write_checkpoint(&outcome.best, &outcome.meta, &mut checkpoint).unwrap();
    BenchRun { outcome, checkpoint, report }
}

fn tiling_consistency(model: &UNet<f32>) -> Outcome {
    let mosaic = synth_dataset(&SynthConfig {
        seed: 99,
        n_images: 1,
        width: 256,
        height: 256,
        blobs_per_image: (12, 40),
        ..SynthConfig::default()
    })
    .unwrap()
    .remove(0);
    let kernel = KernelSpec::with_sigma(SIGMA).unwrap();
    let tiling = TilingOptions::for_kernel(128, &kernel);
    let tiled = predict(model, &mosaic.image, &PredictOptions { tiling: Some(tiling), ..point_opts() }).unwrap();
    let direct = predict(model, &mosaic.image, &point_opts()).unwrap();
    let m = match_points(tiled.points.points(), direct.points.points(), tiling.dedupe_radius).unwrap();
    let exact = tiled.points.len() == direct.points.len()
        && tiled.points.points().iter().all(|p| direct.points.points().contains(p));
    outcome(
        m.fp == 0 && m.fn_ == 0,
        format!(
            "tiled {} vs direct {} points, unmatched {}+{} at dedupe radius {}, identical coordinates: {exact}",
            tiled.points.len(),
            direct.points.len(),
            m.fp,
            m.fn_,
            tiling.dedupe_radius
        ),
    )
}

#[test]
fn acceptance() {
    let mut report = Report::default();
    report.run(1, "codec oracle", Some(Duration::from_secs(10)), codec_oracle);
    report.run(2, "encode/decode round trip", Some(Duration::from_secs(30)), round_trips);
    report.run(3, "gradient suite", Some(Duration::from_secs(120)), gradient_suite);
    report.run(4, "adam closed form", None, adam_closed_form);
    report.run(5, "published F1 arithmetic", None, published_f1);

    let (train_set, test_set) = benchmark_data();
    let mut first = None;
    report.run(6, "desk-scale benchmark", Some(Duration::from_secs(20 * 60)), || {
        let run = run_benchmark(&train_set, &test_set);
        let r = &run.report;
        let o = outcome(
            r.f1 >= 0.90,
            format!(
                "{} train / {} test, f1 {:.4} (p {:.4}, r {:.4}, tp {} fp {} fn {}), best epoch {:?}",
                train_set.len(),
                test_set.len(),
                r.f1,
                r.precision,
                r.recall,
                r.tp,
                r.fp,
                r.fn_,
                run.outcome.best_epoch
            ),
        );
        first = Some(run);
        o
    });
    let first = first.expect("benchmark ran");

    report.run(7, "training loss halves", None, || {
        let recs = &first.outcome.history.records;
        let (a, b) = (recs[0].train_loss, recs[recs.len() - 1].train_loss);
        outcome(b < 0.5 * a, format!("epoch 1 {a:.6}, epoch {} {b:.6}", recs.len()))
    });

    report.run(8, "determinism", None, || {
        let second = run_benchmark(&train_set, &test_set);
        let ckpt = first.checkpoint == second.checkpoint;
        let hist = first.outcome.history.losses() == second.outcome.history.losses()
            && first.outcome.best_epoch == second.outcome.best_epoch;
        let json = first.report.to_json() == second.report.to_json();
        outcome(
            ckpt && hist && json,
            format!("checkpoint bytes {ckpt}, loss history {hist}, metrics json {json}"),
        )
    });

    report.run(9, "tiling consistency", None, || tiling_consistency(&first.outcome.best));

    emit(&format!("{} of 9 criteria passed", 9 - report.failures));
    assert_eq!(report.failures, 0, "failed criteria:\n{}", report.lines.join("\n"));
}
