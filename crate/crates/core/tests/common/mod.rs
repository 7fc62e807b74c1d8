//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use centroid_core::heatmap::{KernelSpec, Point};
use centroid_core::nnet::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: Shape, rng: &mut impl Rng) -> Tensor<f64> {
    let data = (0..shape.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn random_vec(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Per-pixel evaluation of the scaled kernel formula with max fusion.
/// The scaling minimum is the closed-form corner value of the square support.
pub fn encode_oracle(points: &[Point], width: usize, height: usize, spec: &KernelSpec) -> Vec<f64> {
    let r = spec.radius() as f64;
    let s2 = spec.sigma() * spec.sigma();
    let g_min = (-(2.0 * r * r) / (2.0 * s2)).exp();
    let g_max = 1.0;
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut best: f64 = 0.0;
            for p in points {
                let (cx, cy) = (p.x.round(), p.y.round());
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx.abs() > r || dy.abs() > r {
                    continue;
                }
                let g = (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
                best = best.max((g - g_min) / (g_max - g_min));
            }
            out[y * width + x] = best;
        }
    }
    out
}

/// Direct sliding-window same-padding convolution.
pub fn conv_oracle(x: &Tensor<f64>, weight: &[f64], bias: &[f64], c_out: usize, k: usize) -> Tensor<f64> {
    let s = x.shape();
    let pad = (k / 2) as isize;
    let mut out = Tensor::zeros(Shape::new(s.n, c_out, s.h, s.w));
    let os = out.shape();
    let data = out.data_mut();
    for n in 0..s.n {
        for co in 0..c_out {
            for oy in 0..s.h {
                for ox in 0..s.w {
                    let mut acc = bias[co];
                    for ci in 0..s.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy as isize + ky as isize - pad;
                                let ix = ox as isize + kx as isize - pad;
                                if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                    continue;
                                }
                                acc += weight[((co * s.c + ci) * k + ky) * k + kx]
                                    * x.at(n, ci, iy as usize, ix as usize);
                            }
                        }
                    }
                    data[((n * os.c + co) * os.h + oy) * os.w + ox] = acc;
                }
            }
        }
    }
    out
}

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Below this magnitude both gradients are treated as zero-scale and the
/// error is measured relative to the floor instead.
pub const REL_FLOOR: f64 = 1e-6;

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Maximum-cardinality bipartite matching size (augmenting paths).
pub fn max_matching(pred: &[Point], gt: &[Point], radius: f64) -> usize {
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| (0..gt.len()).filter(|&j| p.distance(&gt[j]) <= radius).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gt.len()];
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none() || augment(owner[v].unwrap(), adj, seen, owner) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut size = 0;
    for u in 0..pred.len() {
        let mut seen = vec![false; gt.len()];
        if augment(u, &adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

pub mod gradcheck;
