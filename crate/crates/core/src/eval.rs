//! Point matching and precision / recall / F1.
//!
//! A prediction counts as a true positive when it is paired one-to-one with a
//! ground-truth point no farther than the match radius. Pairing is greedy by
//! ascending distance. True negatives do not exist for point sets and are not
//! reported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub pairs: Vec<MatchPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy one-to-one matching within `radius`.
///
/// Candidate pairs are visited by ascending distance (ties: lower prediction
/// index, then lower ground-truth index); a pair is accepted when neither
/// endpoint is taken yet.
pub fn match_points(pred: &[Point], gt: &[Point], radius: f64) -> Result<MatchResult> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::Parameter(format!("match radius must be > 0, got {radius}")));
    }
    let mut candidates = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = p.distance(g);
            if d <= radius {
                candidates.push(MatchPair {
                    pred: i,
                    gt: j,
                    distance: d,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !pred_used[c.pred] && !gt_used[c.gt] {
            pred_used[c.pred] = true;
            gt_used[c.gt] = true;
            pairs.push(c);
        }
    }
    let tp = pairs.len();
    Ok(MatchResult {
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
        pairs,
    })
}

/// Precision, recall and their harmonic mean.
///
/// Nothing predicted and nothing present scores 1.0 across the board; if only
/// one denominator vanishes that metric is 0.0.
pub fn metrics_from_counts(tp: usize, fp: usize, fn_: usize) -> Metrics {
    if tp + fp == 0 && tp + fn_ == 0 {
        return Metrics {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Metrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn compute_metrics(m: &MatchResult) -> Metrics {
    metrics_from_counts(m.tp, m.fp, m.fn_)
}

/// Micro-averaged dataset scores.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEvaluation {
    pub metrics: Metrics,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub per_image: Vec<MatchResult>,
}

/// Sums TP / FP / FN over index-aligned images, then scores once.
pub fn evaluate_dataset(
    predictions: &[Vec<Point>],
    ground_truths: &[Vec<Point>],
    radius: f64,
) -> Result<DatasetEvaluation> {
    if predictions.len() != ground_truths.len() {
        return Err(Error::Parameter(format!(
            "{} prediction sets but {} ground-truth sets",
            predictions.len(),
            ground_truths.len()
        )));
    }
    let per_image = predictions
        .iter()
        .zip(ground_truths)
        .map(|(p, g)| match_points(p, g, radius))
        .collect::<Result<Vec<_>>>()?;
    let (tp, fp, fn_) = per_image
        .iter()
        .fold((0, 0, 0), |(a, b, c), m| (a + m.tp, b + m.fp, c + m.fn_));
    Ok(DatasetEvaluation {
        metrics: metrics_from_counts(tp, fp, fn_),
        tp,
        fp,
        fn_,
        per_image,
    })
}

/// The metrics JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub radius_px: f64,
    pub images: usize,
}

impl MetricsReport {
    pub fn new(eval: &DatasetEvaluation, radius_px: f64) -> Self {
        Self {
            precision: eval.metrics.precision,
            recall: eval.metrics.recall,
            f1: eval.metrics.f1,
            tp: eval.tp,
            fp: eval.fp,
            fn_: eval.fn_,
            radius_px,
            images: eval.per_image.len(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}
