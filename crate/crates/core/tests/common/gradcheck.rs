//! Finite-difference checks for every layer and the full network, in f64.
//! Each check returns the max relative error over input and parameter
//! gradients of an MSE loss against a random target.

use centroid_core::nnet::{
    concat_backward, concat_forward, dropout_backward, dropout_forward, maxpool2_backward,
    maxpool2_forward, mse_loss, upsample2_backward, upsample2_forward, Activation, BatchNorm,
    Conv2d, Mode, Shape, Tensor, UNet, UNetConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{max_rel_error, numeric_grad, random_tensor, random_vec, rng};

fn loss(out: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    mse_loss(out, target).unwrap().0
}

fn with_data(shape: Shape, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).unwrap()
}

pub fn conv(kernel: usize) -> f64 {
    let mut r = rng(10 + kernel as u64);
    let s = Shape::new(1, 3, 6, 5);
    let x = random_tensor(s, &mut r);
    let mut conv = Conv2d::<f64>::zeros(3, 4, kernel);
    conv.weight = random_vec(conv.weight.len(), &mut r);
    conv.bias = random_vec(4, &mut r);
    let target = random_tensor(Shape::new(1, 4, 6, 5), &mut r);

    let out = conv.forward(&x).unwrap();
    let (_, g) = mse_loss(&out, &target).unwrap();
    let (gx, gp) = conv.backward(&x, &g).unwrap();

    let nx = numeric_grad(x.data(), |d| loss(&conv.forward(&with_data(s, d)).unwrap(), &target));
    let nw = numeric_grad(&conv.weight, |w| {
        let c = Conv2d { weight: w.to_vec(), ..conv.clone() };
        loss(&c.forward(&x).unwrap(), &target)
    });
    let nb = numeric_grad(&conv.bias, |b| {
        let c = Conv2d { bias: b.to_vec(), ..conv.clone() };
        loss(&c.forward(&x).unwrap(), &target)
    });
    max_rel_error(gx.data(), &nx)
        .max(max_rel_error(&gp.weight, &nw))
        .max(max_rel_error(&gp.bias, &nb))
}

pub fn batchnorm(train: bool) -> f64 {
    let mut r = rng(20 + train as u64);
    let s = Shape::new(1, 3, 4, 4);
    let x = random_tensor(s, &mut r);
    let mut bn = BatchNorm::<f64>::new(3);
    bn.gamma = random_vec(3, &mut r);
    bn.beta = random_vec(3, &mut r);
    bn.running_mean = random_vec(3, &mut r);
    bn.running_var = random_vec(3, &mut r).iter().map(|v| v.abs() + 0.5).collect();
    let target = random_tensor(s, &mut r);
    let run = |bn: &BatchNorm<f64>, x: &Tensor<f64>| {
        if train {
            bn.forward_batch(x).unwrap()
        } else {
            bn.forward_eval(x).unwrap()
        }
    };

    let (out, cache) = run(&bn, &x);
    let (_, g) = mse_loss(&out, &target).unwrap();
    let (gx, gp) = bn.backward(&cache, &g).unwrap();

    let nx = numeric_grad(x.data(), |d| loss(&run(&bn, &with_data(s, d)).0, &target));
    let ng = numeric_grad(&bn.gamma, |v| {
        let b = BatchNorm { gamma: v.to_vec(), ..bn.clone() };
        loss(&run(&b, &x).0, &target)
    });
    let nb = numeric_grad(&bn.beta, |v| {
        let b = BatchNorm { beta: v.to_vec(), ..bn.clone() };
        loss(&run(&b, &x).0, &target)
    });
    max_rel_error(gx.data(), &nx)
        .max(max_rel_error(&gp.gamma, &ng))
        .max(max_rel_error(&gp.beta, &nb))
}

pub fn activation(kind: Activation) -> f64 {
    let mut r = rng(30);
    let s = Shape::new(1, 2, 5, 5);
    let x = random_tensor(s, &mut r);
    let target = random_tensor(s, &mut r);
    let out = kind.forward(&x);
    let (_, g) = mse_loss(&out, &target).unwrap();
    let gx = kind.backward(&x, &out, &g);
    let nx = numeric_grad(x.data(), |d| loss(&kind.forward(&with_data(s, d)), &target));
    max_rel_error(gx.data(), &nx)
}

pub fn dropout() -> f64 {
    let mut r = rng(40);
    let s = Shape::new(1, 2, 6, 6);
    let x = random_tensor(s, &mut r);
    let target = random_tensor(s, &mut r);
    let run = |x: &Tensor<f64>| {
        let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
        dropout_forward(x, 0.3, true, &mut mask_rng).unwrap()
    };
    let (out, mask) = run(&x);
    let (_, g) = mse_loss(&out, &target).unwrap();
    let gx = dropout_backward(mask.as_deref(), &g);
    let nx = numeric_grad(x.data(), |d| loss(&run(&with_data(s, d)).0, &target));
    max_rel_error(gx.data(), &nx)
}

pub fn maxpool() -> f64 {
    let mut r = rng(50);
    let s = Shape::new(1, 2, 6, 8);
    let x = random_tensor(s, &mut r);
    let target = random_tensor(Shape::new(1, 2, 3, 4), &mut r);
    let (out, arg) = maxpool2_forward(&x).unwrap();
    let (_, g) = mse_loss(&out, &target).unwrap();
    let gx = maxpool2_backward(s, &arg, &g);
    let nx = numeric_grad(x.data(), |d| loss(&maxpool2_forward(&with_data(s, d)).unwrap().0, &target));
    max_rel_error(gx.data(), &nx)
}

pub fn upsample() -> f64 {
    let mut r = rng(60);
    let s = Shape::new(1, 3, 3, 4);
    let x = random_tensor(s, &mut r);
    let target = random_tensor(Shape::new(1, 3, 6, 8), &mut r);
    let out = upsample2_forward(&x);
    let (_, g) = mse_loss(&out, &target).unwrap();
    let gx = upsample2_backward(&g);
    let nx = numeric_grad(x.data(), |d| loss(&upsample2_forward(&with_data(s, d)), &target));
    max_rel_error(gx.data(), &nx)
}

pub fn concat() -> f64 {
    let mut r = rng(70);
    let (sa, sb) = (Shape::new(1, 2, 3, 3), Shape::new(1, 3, 3, 3));
    let a = random_tensor(sa, &mut r);
    let b = random_tensor(sb, &mut r);
    let target = random_tensor(Shape::new(1, 5, 3, 3), &mut r);
    let out = concat_forward(&a, &b).unwrap();
    let (_, g) = mse_loss(&out, &target).unwrap();
    let (ga, gb) = concat_backward(&g, 2).unwrap();
    let na = numeric_grad(a.data(), |d| loss(&concat_forward(&with_data(sa, d), &b).unwrap(), &target));
    let nb = numeric_grad(b.data(), |d| loss(&concat_forward(&a, &with_data(sb, d)).unwrap(), &target));
    max_rel_error(ga.data(), &na).max(max_rel_error(gb.data(), &nb))
}

pub fn mse() -> f64 {
    let mut r = rng(80);
    let s = Shape::new(1, 1, 4, 4);
    let p = random_tensor(s, &mut r);
    let t = random_tensor(s, &mut r);
    let (_, g) = mse_loss(&p, &t).unwrap();
    let n = numeric_grad(p.data(), |d| loss(&with_data(s, d), &t));
    max_rel_error(g.data(), &n)
}

fn flat_params(model: &UNet<f64>) -> Vec<f64> {
    model.params.trainable().iter().flat_map(|t| t.iter().copied()).collect()
}

fn set_params(model: &mut UNet<f64>, flat: &[f64]) {
    let mut offset = 0;
    for t in model.params.trainable_mut() {
        t.copy_from_slice(&flat[offset..offset + t.len()]);
        offset += t.len();
    }
}

/// Depth-2 network with randomized batch-norm state, dropout disabled.
pub fn unet(mode: Mode) -> f64 {
    let config = UNetConfig {
        depth: 2,
        base_channels: 2,
        in_channels: 3,
        dropout_rate: 0.0,
        seed: 5,
    };
    let mut model = UNet::<f64>::new(config).unwrap();
    let mut r = rng(90);
    for u in model.params.units_mut() {
        let c = u.bn.channels();
        u.bn.gamma = random_vec(c, &mut r).iter().map(|v| v + 1.5).collect();
        u.bn.beta = random_vec(c, &mut r);
        u.bn.running_mean = random_vec(c, &mut r).iter().map(|v| 0.2 * v).collect();
        u.bn.running_var = random_vec(c, &mut r).iter().map(|v| v.abs() + 0.5).collect();
        u.conv.bias = random_vec(c, &mut r).iter().map(|v| 0.1 * v).collect();
    }
    model.params.head.bias = vec![0.1];
    let s = Shape::new(1, 3, 16, 16);
    let x = random_tensor(s, &mut r);
    let target = random_tensor(Shape::new(1, 1, 16, 16), &mut r).map(|v| 0.5 + 0.5 * v);

    let run = |m: &UNet<f64>, x: &Tensor<f64>| {
        let mut dr = ChaCha8Rng::seed_from_u64(0);
        loss(m.forward(x, mode, &mut dr).unwrap().output(), &target)
    };
    let mut dr = ChaCha8Rng::seed_from_u64(0);
    let trace = model.forward(&x, mode, &mut dr).unwrap();
    let (_, g) = mse_loss(trace.output(), &target).unwrap();
    let (grads, gx) = model.backward(&trace, &g).unwrap();

    let nx = numeric_grad(x.data(), |d| run(&model, &with_data(s, d)));
    let base = flat_params(&model);
    let mut probe = model.clone();
    let np = numeric_grad(&base, |p| {
        set_params(&mut probe, p);
        run(&probe, &x)
    });
    let analytic: Vec<f64> = grads.trainable().iter().flat_map(|t| t.iter().copied()).collect();
    max_rel_error(gx.data(), &nx).max(max_rel_error(&analytic, &np))
}

/// Every check, labelled.
pub fn suite() -> Vec<(&'static str, f64)> {
    vec![
        ("conv2d 3x3", conv(3)),
        ("conv2d 1x1", conv(1)),
        ("batchnorm train", batchnorm(true)),
        ("batchnorm eval", batchnorm(false)),
        ("relu", activation(Activation::Relu)),
        ("sigmoid", activation(Activation::Sigmoid)),
        ("dropout", dropout()),
        ("maxpool2", maxpool()),
        ("upsample2", upsample()),
        ("concat", concat()),
        ("mse", mse()),
        ("unet depth 2 eval", unet(Mode::Eval)),
        ("unet depth 2 train", unet(Mode::Train)),
    ]
}
