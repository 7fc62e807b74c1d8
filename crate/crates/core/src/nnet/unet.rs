//! The encoder-decoder network with skip connections.
//!
//! Every level runs two conv → batch-norm → ReLU units. The encoder halves the
//! resolution with 2×2 max pooling; the decoder doubles it with
//! nearest-neighbor upsampling followed by a conv unit, concatenates the
//! matching encoder output and runs two more units. Dropout sits at the
//! bottleneck; a 1×1 conv and a sigmoid produce the single-channel heatmap.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    concat_backward, concat_forward, dropout_backward, dropout_forward, maxpool2_backward,
    maxpool2_forward, upsample2_backward, upsample2_forward, Activation, BatchNorm,
    BatchNormCache, Conv2d,
};
use super::tensor::{Real, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UNetConfig {
    /// Number of pooling levels.
    pub depth: usize,
    /// Channels at the first level; doubled per level down.
    pub base_channels: usize,
    pub in_channels: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            base_channels: 8,
            in_channels: 3,
            dropout_rate: 0.2,
            seed: 0,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Parameter("depth must be >= 1".into()));
        }
        if self.depth > 16 {
            return Err(Error::Parameter(format!("depth {} is unreasonably large", self.depth)));
        }
        if self.base_channels < 1 || self.in_channels < 1 {
            return Err(Error::Parameter("channel counts must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Input height and width must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << self.depth
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        let d = self.divisor();
        if h == 0 || w == 0 || !h.is_multiple_of(d) || !w.is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "input {w}x{h}: dims must be divisible by {d} (depth {})",
                self.depth
            )));
        }
        Ok(())
    }

    /// Number of learnable scalars (running statistics excluded).
    pub fn param_count(&self) -> usize {
        let unit = |ci: usize, co: usize| co * ci * 9 + co + 2 * co;
        let mut total = 0;
        let mut c_prev = self.in_channels;
        for l in 0..self.depth {
            let c = self.channels(l);
            total += unit(c_prev, c) + unit(c, c);
            c_prev = c;
        }
        let cb = self.channels(self.depth);
        total += unit(c_prev, cb) + unit(cb, cb);
        for l in (0..self.depth).rev() {
            let (c, c_below) = (self.channels(l), self.channels(l + 1));
            total += unit(c_below, c) + unit(2 * c, c) + unit(c, c);
        }
        total + self.base_channels + 1
    }
}

/// conv → batch-norm → ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvUnit<T> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Real> ConvUnit<T> {
    fn init<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Self {
        Self {
            conv: Conv2d::he_uniform(c_in, c_out, 3, rng),
            bn: BatchNorm::new(c_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            conv: Conv2d::zeros(self.conv.c_in, self.conv.c_out, self.conv.kernel),
            bn: BatchNorm {
                gamma: vec![T::zero(); self.bn.channels()],
                beta: vec![T::zero(); self.bn.channels()],
                running_mean: vec![T::zero(); self.bn.channels()],
                running_var: vec![T::zero(); self.bn.channels()],
            },
        }
    }

    fn forward(&self, x: Tensor<T>, train: bool) -> Result<(Tensor<T>, UnitTrace<T>)> {
        let pre = self.conv.forward(&x)?;
        let (normed, bn) = if train {
            self.bn.forward_batch(&pre)?
        } else {
            self.bn.forward_eval(&pre)?
        };
        let out = Activation::Relu.forward(&normed);
        Ok((
            out,
            UnitTrace {
                input: x,
                normed,
                bn,
            },
        ))
    }

    fn backward(&self, trace: &UnitTrace<T>, grad: &Tensor<T>, acc: &mut ConvUnit<T>) -> Result<Tensor<T>> {
        let g = Activation::Relu.backward(&trace.normed, &trace.normed, grad);
        let (g, bn_grads) = self.bn.backward(&trace.bn, &g)?;
        let (g, conv_grads) = self.conv.backward(&trace.input, &g)?;
        acc.conv.weight = conv_grads.weight;
        acc.conv.bias = conv_grads.bias;
        acc.bn.gamma = bn_grads.gamma;
        acc.bn.beta = bn_grads.beta;
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLevel<T> {
    pub up: ConvUnit<T>,
    pub convs: [ConvUnit<T>; 2],
}

/// All weights and batch-norm state. Gradients reuse this type; their
/// running-statistic fields stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct UNetParams<T> {
    pub encoder: Vec<[ConvUnit<T>; 2]>,
    pub bottleneck: [ConvUnit<T>; 2],
    /// Deepest level first (execution order).
    pub decoder: Vec<DecoderLevel<T>>,
    pub head: Conv2d<T>,
}

impl<T: Real> UNetParams<T> {
    pub fn init(config: &UNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut encoder = Vec::with_capacity(config.depth);
        let mut c_prev = config.in_channels;
        for l in 0..config.depth {
            let c = config.channels(l);
            encoder.push([ConvUnit::init(c_prev, c, &mut rng), ConvUnit::init(c, c, &mut rng)]);
            c_prev = c;
        }
        let cb = config.channels(config.depth);
        let bottleneck = [ConvUnit::init(c_prev, cb, &mut rng), ConvUnit::init(cb, cb, &mut rng)];
        let decoder = (0..config.depth)
            .rev()
            .map(|l| {
                let (c, c_below) = (config.channels(l), config.channels(l + 1));
                DecoderLevel {
                    up: ConvUnit::init(c_below, c, &mut rng),
                    convs: [ConvUnit::init(2 * c, c, &mut rng), ConvUnit::init(c, c, &mut rng)],
                }
            })
            .collect();
        let head = Conv2d::he_uniform(config.base_channels, 1, 1, &mut rng);
        Ok(Self {
            encoder,
            bottleneck,
            decoder,
            head,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self
                .encoder
                .iter()
                .map(|[a, b]| [a.zeros_like(), b.zeros_like()])
                .collect(),
            bottleneck: [self.bottleneck[0].zeros_like(), self.bottleneck[1].zeros_like()],
            decoder: self
                .decoder
                .iter()
                .map(|d| DecoderLevel {
                    up: d.up.zeros_like(),
                    convs: [d.convs[0].zeros_like(), d.convs[1].zeros_like()],
                })
                .collect(),
            head: Conv2d::zeros(self.head.c_in, self.head.c_out, self.head.kernel),
        }
    }

    /// Conv units in canonical order: encoder, bottleneck, decoder (deepest first).
    pub fn units(&self) -> Vec<&ConvUnit<T>> {
        let mut out: Vec<&ConvUnit<T>> = Vec::new();
        for level in &self.encoder {
            out.extend(level.iter());
        }
        out.extend(self.bottleneck.iter());
        for d in &self.decoder {
            out.push(&d.up);
            out.extend(d.convs.iter());
        }
        out
    }

    pub fn units_mut(&mut self) -> Vec<&mut ConvUnit<T>> {
        let mut out: Vec<&mut ConvUnit<T>> = Vec::new();
        for level in &mut self.encoder {
            out.extend(level.iter_mut());
        }
        out.extend(self.bottleneck.iter_mut());
        for d in &mut self.decoder {
            out.push(&mut d.up);
            out.extend(d.convs.iter_mut());
        }
        out
    }

    /// Learnable tensors in canonical order: for each unit conv weight, conv
    /// bias, gamma, beta; then head weight and bias.
    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for u in self.units() {
            out.extend([&u.conv.weight[..], &u.conv.bias, &u.bn.gamma, &u.bn.beta]);
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        let Self {
            encoder,
            bottleneck,
            decoder,
            head,
        } = self;
        let mut units: Vec<&mut ConvUnit<T>> = Vec::new();
        for level in encoder.iter_mut() {
            units.extend(level.iter_mut());
        }
        units.extend(bottleneck.iter_mut());
        for d in decoder.iter_mut() {
            units.push(&mut d.up);
            units.extend(d.convs.iter_mut());
        }
        for u in units {
            let ConvUnit { conv, bn } = u;
            out.push(&mut conv.weight);
            out.push(&mut conv.bias);
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out.push(&mut head.weight);
        out.push(&mut head.bias);
        out
    }

    pub fn convert<U: Real>(&self) -> UNetParams<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::from_f64_lossy(x.as_f64())).collect::<Vec<U>>();
        let conv = |c: &Conv2d<T>| Conv2d {
            c_in: c.c_in,
            c_out: c.c_out,
            kernel: c.kernel,
            weight: cv(&c.weight),
            bias: cv(&c.bias),
        };
        let unit = |u: &ConvUnit<T>| ConvUnit {
            conv: conv(&u.conv),
            bn: BatchNorm {
                gamma: cv(&u.bn.gamma),
                beta: cv(&u.bn.beta),
                running_mean: cv(&u.bn.running_mean),
                running_var: cv(&u.bn.running_var),
            },
        };
        UNetParams {
            encoder: self.encoder.iter().map(|[a, b]| [unit(a), unit(b)]).collect(),
            bottleneck: [unit(&self.bottleneck[0]), unit(&self.bottleneck[1])],
            decoder: self
                .decoder
                .iter()
                .map(|d| DecoderLevel {
                    up: unit(&d.up),
                    convs: [unit(&d.convs[0]), unit(&d.convs[1])],
                })
                .collect(),
            head: conv(&self.head),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and active dropout.
    Train,
    /// Running statistics, dropout off.
    Eval,
}

#[derive(Debug, Clone)]
struct UnitTrace<T> {
    input: Tensor<T>,
    /// Batch-norm output, i.e. the ReLU input.
    normed: Tensor<T>,
    bn: BatchNormCache<T>,
}

#[derive(Debug, Clone)]
struct DecoderTrace<T> {
    up: UnitTrace<T>,
    convs: [UnitTrace<T>; 2],
    up_channels: usize,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    encoder: Vec<[UnitTrace<T>; 2]>,
    pools: Vec<(Shape, Vec<u32>)>,
    bottleneck: [UnitTrace<T>; 2],
    dropout_mask: Option<Vec<T>>,
    decoder: Vec<DecoderTrace<T>>,
    head_input: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet<T> {
    pub config: UNetConfig,
    pub params: UNetParams<T>,
}

impl<T: Real> UNet<T> {
    pub fn new(config: UNetConfig) -> Result<Self> {
        Ok(Self {
            config,
            params: UNetParams::init(&config)?,
        })
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        if s.c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {s}",
                self.config.in_channels
            )));
        }
        self.config.check_dims(s.h, s.w)
    }

    /// Full forward pass keeping the intermediate state for [`UNet::backward`].
    /// Train mode does not touch the running statistics; call
    /// [`UNet::commit_running_stats`] for that.
    pub fn forward<R: Rng>(&self, input: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Trace<T>> {
        self.check_input(input.shape())?;
        let train = mode == Mode::Train;
        let p = &self.params;
        let mut x = input.clone();
        let mut encoder = Vec::with_capacity(self.config.depth);
        let mut pools = Vec::with_capacity(self.config.depth);
        let mut skips = Vec::with_capacity(self.config.depth);
        for [u0, u1] in &p.encoder {
            let (y, t0) = u0.forward(x, train)?;
            let (y, t1) = u1.forward(y, train)?;
            let (pooled, argmax) = maxpool2_forward(&y)?;
            pools.push((y.shape(), argmax));
            skips.push(y);
            encoder.push([t0, t1]);
            x = pooled;
        }
        let (y, b0) = p.bottleneck[0].forward(x, train)?;
        let (y, b1) = p.bottleneck[1].forward(y, train)?;
        let (mut x, dropout_mask) = dropout_forward(&y, self.config.dropout_rate, train, rng)?;

        let mut decoder = Vec::with_capacity(self.config.depth);
        for level in &p.decoder {
            let skip = skips.pop().expect("one skip per level");
            let (y, up) = level.up.forward(upsample2_forward(&x), train)?;
            let up_channels = y.shape().c;
            let merged = concat_forward(&y, &skip)?;
            let (y, c0) = level.convs[0].forward(merged, train)?;
            let (y, c1) = level.convs[1].forward(y, train)?;
            decoder.push(DecoderTrace {
                up,
                convs: [c0, c1],
                up_channels,
            });
            x = y;
        }
        let logits = p.head.forward(&x)?;
        let output = Activation::Sigmoid.forward(&logits);
        Ok(Trace {
            encoder,
            pools,
            bottleneck: [b0, b1],
            dropout_mask,
            decoder,
            head_input: x,
            output,
        })
    }

    /// Eval-mode output only.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(input, Mode::Eval, &mut rng)?.output)
    }

    /// Gradients of a scalar loss given `grad_out = dL/d(output)`.
    /// Returns the parameter gradients and the input gradient.
    pub fn backward(&self, trace: &Trace<T>, grad_out: &Tensor<T>) -> Result<(UNetParams<T>, Tensor<T>)> {
        if grad_out.shape() != trace.output.shape() {
            return Err(Error::Shape(format!(
                "output gradient {} does not match output {}",
                grad_out.shape(),
                trace.output.shape()
            )));
        }
        let p = &self.params;
        let mut grads = p.zeros_like();
        let g = Activation::Sigmoid.backward(&trace.output, &trace.output, grad_out);
        let (mut g, head) = p.head.backward(&trace.head_input, &g)?;
        grads.head.weight = head.weight;
        grads.head.bias = head.bias;

        let depth = self.config.depth;
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; depth];
        for i in (0..p.decoder.len()).rev() {
            let (level, t) = (&p.decoder[i], &trace.decoder[i]);
            let acc = &mut grads.decoder[i];
            let g1 = level.convs[1].backward(&t.convs[1], &g, &mut acc.convs[1])?;
            let g0 = level.convs[0].backward(&t.convs[0], &g1, &mut acc.convs[0])?;
            let (g_up, g_skip) = concat_backward(&g0, t.up_channels)?;
            skip_grads[depth - 1 - i] = Some(g_skip);
            let g_up = level.up.backward(&t.up, &g_up, &mut acc.up)?;
            g = upsample2_backward(&g_up);
        }

        g = dropout_backward(trace.dropout_mask.as_deref(), &g);
        let g1 = p.bottleneck[1].backward(&trace.bottleneck[1], &g, &mut grads.bottleneck[1])?;
        g = p.bottleneck[0].backward(&trace.bottleneck[0], &g1, &mut grads.bottleneck[0])?;

        for l in (0..depth).rev() {
            let (shape, argmax) = &trace.pools[l];
            let pooled = maxpool2_backward(*shape, argmax, &g);
            let skip = skip_grads[l].take().expect("skip gradient per level");
            let merged = pooled.zip_map(&skip, |a, b| a + b);
            let [u0, u1] = &p.encoder[l];
            let [t0, t1] = &trace.encoder[l];
            let [a0, a1] = &mut grads.encoder[l];
            let g1 = u1.backward(t1, &merged, a1)?;
            g = u0.backward(t0, &g1, a0)?;
        }
        Ok((grads, g))
    }

    /// Folds the batch statistics of a train-mode trace into the running averages.
    pub fn commit_running_stats(&mut self, trace: &Trace<T>) {
        let mut traces: Vec<&UnitTrace<T>> = Vec::new();
        for level in &trace.encoder {
            traces.extend(level.iter());
        }
        traces.extend(trace.bottleneck.iter());
        for d in &trace.decoder {
            traces.push(&d.up);
            traces.extend(d.convs.iter());
        }
        for (unit, t) in self.params.units_mut().into_iter().zip(traces) {
            unit.bn.update_running(&t.bn);
        }
    }
}
