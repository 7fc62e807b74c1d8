//! Layer kernels with hand-derived backward passes.
//!
//! Every forward function is paired with a backward function that consumes
//! whatever the forward pass cached. Per-plane work is spread with rayon;
//! each output value is produced by exactly one task in a fixed order, so
//! results do not depend on the worker count.

use rand::Rng;
use rayon::prelude::*;

use super::tensor::{Real, Shape, Tensor};
use crate::error::{Error, Result};

/// `dst[y, x] += a * src[y + dy, x + dx]` over the overlap, zero outside.
#[inline]
fn shifted_axpy<T: Real>(dst: &mut [T], src: &[T], h: usize, w: usize, dy: isize, dx: isize, a: T) {
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize);
    if x1 <= x0 as isize {
        return;
    }
    let x1 = x1 as usize;
    for oy in 0..h {
        let iy = oy as isize + dy;
        if iy < 0 || iy >= h as isize {
            continue;
        }
        let d = &mut dst[oy * w + x0..oy * w + x1];
        let start = (iy as usize * w) as isize + x0 as isize + dx;
        let s = &src[start as usize..start as usize + (x1 - x0)];
        for (o, &i) in d.iter_mut().zip(s) {
            *o = *o + a * i;
        }
    }
}

/// Eight-lane dot product; the lane layout is fixed so the result is reproducible.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn shifted_dot<T: Real>(a: &[T], b: &[T], h: usize, w: usize, dy: isize, dx: isize) -> T {
    // sum over (y, x) of a[y, x] * b[y + dy, x + dx]
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize);
    if x1 <= x0 as isize {
        return T::zero();
    }
    let x1 = x1 as usize;
    let mut total = T::zero();
    for oy in 0..h {
        let iy = oy as isize + dy;
        if iy < 0 || iy >= h as isize {
            continue;
        }
        let start = (iy as usize * w) as isize + x0 as isize + dx;
        total = total
            + dot(
                &a[oy * w + x0..oy * w + x1],
                &b[start as usize..start as usize + (x1 - x0)],
            );
    }
    total
}

/// Square same-padding convolution, stride 1 (kernel sizes 1 and 3 are used).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    /// `(c_out, c_in, k, k)` row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(c_in: usize, c_out: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        Self {
            c_in,
            c_out,
            kernel,
            weight: vec![T::zero(); c_out * c_in * kernel * kernel],
            bias: vec![T::zero(); c_out],
        }
    }

    /// He-uniform fan-in initialization, zero bias.
    pub fn he_uniform<R: Rng>(c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Self {
        let mut conv = Self::zeros(c_in, c_out, kernel);
        let limit = (6.0 / (c_in * kernel * kernel) as f64).sqrt();
        for w in &mut conv.weight {
            *w = T::from_f64_lossy(rng.gen_range(-limit..limit));
        }
        conv
    }

    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        if s.c != self.c_in {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {} (input {s})",
                self.c_in, s.c
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        self.check_input(s)?;
        let out_shape = Shape::new(s.n, self.c_out, s.h, s.w);
        let mut out = Tensor::zeros(out_shape);
        let (k, pad, plane) = (self.kernel, self.pad(), s.plane());
        out.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, dst)| {
                let (n, co) = (idx / self.c_out, idx % self.c_out);
                dst.fill(self.bias[co]);
                for ci in 0..self.c_in {
                    let src = x.plane(n, ci);
                    let wbase = (co * self.c_in + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = self.weight[wbase + ky * k + kx];
                            shifted_axpy(dst, src, s.h, s.w, ky as isize - pad, kx as isize - pad, wv);
                        }
                    }
                }
            });
        Ok(out)
    }

    /// Returns the input gradient and parameter gradients for `grad_out`.
    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, ConvGrads<T>)> {
        let s = x.shape();
        self.check_input(s)?;
        let gs = grad_out.shape();
        if gs != Shape::new(s.n, self.c_out, s.h, s.w) {
            return Err(Error::Shape(format!(
                "conv gradient shape {gs} does not match output of input {s}"
            )));
        }
        let (k, pad, plane) = (self.kernel, self.pad(), s.plane());

        let mut grad_in = Tensor::zeros(s);
        grad_in
            .data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, dst)| {
                let (n, ci) = (idx / self.c_in, idx % self.c_in);
                for co in 0..self.c_out {
                    let g = grad_out.plane(n, co);
                    let wbase = (co * self.c_in + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = self.weight[wbase + ky * k + kx];
                            shifted_axpy(dst, g, s.h, s.w, pad - ky as isize, pad - kx as isize, wv);
                        }
                    }
                }
            });

        let mut weight = vec![T::zero(); self.weight.len()];
        weight
            .par_chunks_mut(self.c_in * k * k)
            .enumerate()
            .for_each(|(co, dw)| {
                for n in 0..s.n {
                    let g = grad_out.plane(n, co);
                    for ci in 0..self.c_in {
                        let src = x.plane(n, ci);
                        for ky in 0..k {
                            for kx in 0..k {
                                let slot = &mut dw[(ci * k + ky) * k + kx];
                                *slot = *slot
                                    + shifted_dot(g, src, s.h, s.w, ky as isize - pad, kx as isize - pad);
                            }
                        }
                    }
                }
            });
        let bias = (0..self.c_out)
            .map(|co| {
                (0..s.n).fold(T::zero(), |acc, n| {
                    acc + grad_out.plane(n, co).iter().copied().sum::<T>()
                })
            })
            .collect();
        Ok((grad_in, ConvGrads { weight, bias }))
    }
}

/// Per-channel normalization over the `(n, h, w)` axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// What the backward pass needs from a batch-norm forward.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    /// Batch mean and variance, present for train-mode passes.
    batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub const EPSILON: f64 = 1e-5;
    /// Weight kept by the running statistics at each update.
    pub const MOMENTUM: f64 = 0.9;

    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, s: Shape) -> Result<()> {
        if s.c != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm has {} channels, input {s}",
                self.channels()
            )));
        }
        Ok(())
    }

    fn normalize(&self, x: &Tensor<T>, mean: &[T], inv_std: &[T]) -> (Tensor<T>, Tensor<T>) {
        let s = x.shape();
        let mut xhat = Tensor::zeros(s);
        let mut y = Tensor::zeros(s);
        let plane = s.plane();
        for (idx, (xh, yy)) in xhat
            .data_mut()
            .chunks_mut(plane)
            .zip(y.data_mut().chunks_mut(plane))
            .enumerate()
        {
            let (n, c) = (idx / s.c, idx % s.c);
            let src = x.plane(n, c);
            for i in 0..plane {
                let v = (src[i] - mean[c]) * inv_std[c];
                xh[i] = v;
                yy[i] = self.gamma[c] * v + self.beta[c];
            }
        }
        (y, xhat)
    }

    /// Normalizes with batch statistics and folds them into the running averages.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let (y, cache) = self.forward_batch(x)?;
        self.update_running(&cache);
        Ok((y, cache))
    }

    /// Folds a train-mode cache's batch statistics into the running averages.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let Some((mean, var)) = &cache.batch_stats else {
            return;
        };
        let keep = Self::MOMENTUM;
        for c in 0..self.channels() {
            let rm = self.running_mean[c].as_f64();
            let rv = self.running_var[c].as_f64();
            self.running_mean[c] = T::from_f64_lossy(keep * rm + (1.0 - keep) * mean[c]);
            self.running_var[c] = T::from_f64_lossy(keep * rv + (1.0 - keep) * var[c]);
        }
    }

    /// Normalizes with batch statistics without touching the running averages.
    pub fn forward_batch(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let s = x.shape();
        self.check(s)?;
        let count = (s.n * s.plane()) as f64;
        let mut mean = Vec::with_capacity(s.c);
        let mut var = Vec::with_capacity(s.c);
        for c in 0..s.c {
            let mut sum = 0.0f64;
            for n in 0..s.n {
                sum += x.plane(n, c).iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let m = sum / count;
            let mut sq = 0.0f64;
            for n in 0..s.n {
                sq += x
                    .plane(n, c)
                    .iter()
                    .map(|v| {
                        let d = v.as_f64() - m;
                        d * d
                    })
                    .sum::<f64>();
            }
            mean.push(m);
            var.push(sq / count);
        }
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::from_f64_lossy(1.0 / (v + Self::EPSILON).sqrt()))
            .collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::from_f64_lossy(m)).collect();
        let (y, xhat) = self.normalize(x, &mean_t, &inv_std);
        Ok((
            y,
            BatchNormCache {
                xhat,
                inv_std,
                batch_stats: Some((mean, var)),
            },
        ))
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        self.check(x.shape())?;
        let inv_std: Vec<T> = self
            .running_var
            .iter()
            .map(|v| T::from_f64_lossy(1.0 / (v.as_f64() + Self::EPSILON).sqrt()))
            .collect();
        let (y, xhat) = self.normalize(x, &self.running_mean, &inv_std);
        Ok((
            y,
            BatchNormCache {
                xhat,
                inv_std,
                batch_stats: None,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, BatchNormGrads<T>)> {
        let s = grad_out.shape();
        if s != cache.xhat.shape() {
            return Err(Error::Shape(format!(
                "batchnorm gradient {s} does not match cached {}",
                cache.xhat.shape()
            )));
        }
        let plane = s.plane();
        let count = T::from_usize(s.n * plane).unwrap();
        let mut dgamma = vec![T::zero(); s.c];
        let mut dbeta = vec![T::zero(); s.c];
        for c in 0..s.c {
            for n in 0..s.n {
                let g = grad_out.plane(n, c);
                let xh = cache.xhat.plane(n, c);
                dbeta[c] = dbeta[c] + g.iter().copied().sum::<T>();
                dgamma[c] = dgamma[c] + dot(g, xh);
            }
        }
        let mut grad_in = Tensor::zeros(s);
        for (idx, dst) in grad_in.data_mut().chunks_mut(plane).enumerate() {
            let (n, c) = (idx / s.c, idx % s.c);
            let g = grad_out.plane(n, c);
            let xh = cache.xhat.plane(n, c);
            let scale = self.gamma[c] * cache.inv_std[c];
            if cache.batch_stats.is_some() {
                // dx = γ·σ⁻¹·(dy − mean(dy) − x̂·mean(dy·x̂))
                let mean_g = dbeta[c] / count;
                let mean_gx = dgamma[c] / count;
                for i in 0..plane {
                    dst[i] = scale * (g[i] - mean_g - xh[i] * mean_gx);
                }
            } else {
                for i in 0..plane {
                    dst[i] = scale * g[i];
                }
            }
        }
        Ok((
            grad_in,
            BatchNormGrads {
                gamma: dgamma,
                beta: dbeta,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub fn sigmoid<T: Real>(x: T) -> T {
    let one = T::one();
    let s = if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    // Saturate at the closest representable values inside the open interval.
    s.max(T::min_positive_value())
        .min(one - T::epsilon() / T::from_f64_lossy(2.0))
}

impl Activation {
    pub fn forward<T: Real>(self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Relu => x.map(|v| v.max(T::zero())),
            Activation::Sigmoid => x.map(sigmoid),
        }
    }

    /// `input` and `output` are the forward pass's argument and result.
    pub fn backward<T: Real>(self, input: &Tensor<T>, output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Relu => {
                grad_out.zip_map(input, |g, x| if x > T::zero() { g } else { T::zero() })
            }
            Activation::Sigmoid => grad_out.zip_map(output, |g, s| g * s * (T::one() - s)),
        }
    }
}

/// Inverted dropout. Returns the output and the per-element scale mask used.
pub fn dropout_forward<T: Real, R: Rng>(
    x: &Tensor<T>,
    rate: f64,
    train: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if !train || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.data().len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::from_vec(x.shape(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(mask: Option<&[T]>, grad_out: &Tensor<T>) -> Tensor<T> {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let mut g = grad_out.clone();
            for (v, &k) in g.data_mut().iter_mut().zip(m) {
                *v = *v * k;
            }
            g
        }
    }
}

/// 2×2 max pooling, stride 2. Also returns the argmax offset within each input plane.
pub fn maxpool2_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let s = x.shape();
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::Shape(format!("maxpool2 needs even dims, got {s}")));
    }
    let os = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Tensor::zeros(os);
    let mut argmax = vec![0u32; os.len()];
    let oplane = os.plane();
    for (idx, (dst, arg)) in out
        .data_mut()
        .chunks_mut(oplane)
        .zip(argmax.chunks_mut(oplane))
        .enumerate()
    {
        let src = x.plane(idx / s.c, idx % s.c);
        for oy in 0..os.h {
            for ox in 0..os.w {
                let mut best = 2 * oy * s.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let cand = (2 * oy + dy) * s.w + 2 * ox + dx;
                    if src[cand] > src[best] {
                        best = cand;
                    }
                }
                dst[oy * os.w + ox] = src[best];
                arg[oy * os.w + ox] = best as u32;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2_backward<T: Real>(input_shape: Shape, argmax: &[u32], grad_out: &Tensor<T>) -> Tensor<T> {
    let mut g = Tensor::zeros(input_shape);
    let plane = input_shape.plane();
    let oplane = grad_out.shape().plane();
    for (idx, dst) in g.data_mut().chunks_mut(plane).enumerate() {
        let go = &grad_out.data()[idx * oplane..(idx + 1) * oplane];
        let arg = &argmax[idx * oplane..(idx + 1) * oplane];
        for (&v, &a) in go.iter().zip(arg) {
            dst[a as usize] = dst[a as usize] + v;
        }
    }
    g
}

/// Nearest-neighbor 2× upsampling.
pub fn upsample2_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let os = Shape::new(s.n, s.c, s.h * 2, s.w * 2);
    let mut out = Tensor::zeros(os);
    for (idx, dst) in out.data_mut().chunks_mut(os.plane()).enumerate() {
        let src = x.plane(idx / s.c, idx % s.c);
        for oy in 0..os.h {
            let row = &src[(oy / 2) * s.w..(oy / 2 + 1) * s.w];
            for (ox, v) in dst[oy * os.w..(oy + 1) * os.w].iter_mut().enumerate() {
                *v = row[ox / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    let gs = grad_out.shape();
    let s = Shape::new(gs.n, gs.c, gs.h / 2, gs.w / 2);
    let mut g = Tensor::zeros(s);
    for (idx, dst) in g.data_mut().chunks_mut(s.plane()).enumerate() {
        let src = grad_out.plane(idx / s.c, idx % s.c);
        for y in 0..s.h {
            for x in 0..s.w {
                let a = 2 * y * gs.w + 2 * x;
                dst[y * s.w + x] = (src[a] + src[a + 1]) + (src[a + gs.w] + src[a + gs.w + 1]);
            }
        }
    }
    g
}

/// Channel concatenation, `first` channels before `second`.
pub fn concat_forward<T: Real>(first: &Tensor<T>, second: &Tensor<T>) -> Result<Tensor<T>> {
    let (a, b) = (first.shape(), second.shape());
    if (a.n, a.h, a.w) != (b.n, b.h, b.w) {
        return Err(Error::Shape(format!("cannot concatenate {a} with {b}")));
    }
    let os = Shape::new(a.n, a.c + b.c, a.h, a.w);
    let mut data = Vec::with_capacity(os.len());
    for n in 0..a.n {
        let fa = a.c * a.plane();
        let fb = b.c * b.plane();
        data.extend_from_slice(&first.data()[n * fa..(n + 1) * fa]);
        data.extend_from_slice(&second.data()[n * fb..(n + 1) * fb]);
    }
    Tensor::from_vec(os, data)
}

/// Splits a gradient at the channel boundary `first_channels`.
pub fn concat_backward<T: Real>(grad_out: &Tensor<T>, first_channels: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = grad_out.shape();
    if first_channels == 0 || first_channels >= s.c {
        return Err(Error::Shape(format!(
            "split point {first_channels} invalid for {s}"
        )));
    }
    let fa = first_channels * s.plane();
    let fb = (s.c - first_channels) * s.plane();
    let mut a = Vec::with_capacity(s.n * fa);
    let mut b = Vec::with_capacity(s.n * fb);
    for n in 0..s.n {
        let item = &grad_out.data()[n * (fa + fb)..(n + 1) * (fa + fb)];
        a.extend_from_slice(&item[..fa]);
        b.extend_from_slice(&item[fa..]);
    }
    Ok((
        Tensor::from_vec(Shape::new(s.n, first_channels, s.h, s.w), a)?,
        Tensor::from_vec(Shape::new(s.n, s.c - first_channels, s.h, s.w), b)?,
    ))
}
