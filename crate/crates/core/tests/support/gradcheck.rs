//! Central finite-difference checks for every layer kernel, both losses and
//! a whole toy-sized regression network.
//!
//! Each check draws a random configuration, forms the scalar
//! `L = Σ r ⊙ layer(x)` for a random projection `r`, and compares the
//! analytic gradient (backward fed with `r`) against
//! `(L(θ + ε) − L(θ − ε)) / 2ε` for every input and parameter element.

#![allow(dead_code)]

use ftl_core::kernels::activation::{relu, relu_backward, softmax, softmax_backward};
use ftl_core::kernels::conv::{conv_backward, conv_forward, ConvSpec};
use ftl_core::kernels::dense::{dense, dense_backward};
use ftl_core::kernels::lstm::{lstm_backward, lstm_sequence, LstmParams, LstmSpec};
use ftl_core::kernels::pool::{maxpool2d, maxpool2d_backward, PoolSpec};
use ftl_core::nn::{additive_l2_loss, cross_entropy_loss, LayerSpec, Network, NetworkSpec, OutputGrad, OutputHead};
use ftl_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub configs: usize,
    pub checked: usize,
    pub worst_rel: f64,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

fn project(r: &Tensor, y: &Tensor) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Worst relative error over every element of `x`, perturbing it in place.
fn sweep(x: &mut Tensor, analytic: &Tensor, mut loss: impl FnMut(&Tensor) -> f64, checked: &mut usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + EPS;
        let up = loss(x);
        x.data_mut()[i] = orig - EPS;
        let dn = loss(x);
        x.data_mut()[i] = orig;
        let numeric = (up - dn) / (2.0 * EPS);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
        *checked += 1;
    }
    worst
}

fn conv_case(rng: &mut ChaCha8Rng, grouped: bool, checked: &mut usize) -> f64 {
    let groups = if grouped { rng.gen_range(2..=4) } else { 1 };
    let cin = groups * rng.gen_range(1..=3);
    let cout = groups * rng.gen_range(1..=3);
    let k = [1, 2, 3][rng.gen_range(0..3)];
    let spec = ConvSpec {
        in_channels: cin,
        out_channels: cout,
        kernel_h: k,
        kernel_w: [1, 3][rng.gen_range(0..2)].max(1),
        stride: rng.gen_range(1..=2),
        padding: rng.gen_range(0..=1),
        groups,
        bias: rng.gen_bool(0.7),
    };
    let (h, w) = (rng.gen_range(k.max(3)..=6), rng.gen_range(3..=6));
    let mut x = random(&[cin, h, w], rng);
    let mut wt = random(&spec.weight_shape(), rng);
    let mut b = random(&[cout], rng);
    let bias_opt = |b: &Tensor| if spec.bias { Some(b.clone()) } else { None };
    let y = conv_forward(&x, &wt, bias_opt(&b).as_ref(), &spec).unwrap();
    let r = random(y.shape(), rng);
    let g = conv_backward(&x, &wt, &r, &spec).unwrap();
    let mut worst: f64 = 0.0;
    {
        let (wt, b) = (wt.clone(), bias_opt(&b));
        worst = worst.max(sweep(&mut x, &g.input, |xx| project(&r, &conv_forward(xx, &wt, b.as_ref(), &spec).unwrap()), checked));
    }
    {
        let (xx, b) = (x.clone(), bias_opt(&b));
        worst = worst.max(sweep(&mut wt, &g.weights, |ww| project(&r, &conv_forward(&xx, ww, b.as_ref(), &spec).unwrap()), checked));
    }
    if spec.bias {
        let (xx, ww) = (x.clone(), wt.clone());
        let gb = g.bias.clone().unwrap();
        worst = worst.max(sweep(&mut b, &gb, |bb| project(&r, &conv_forward(&xx, &ww, Some(bb), &spec).unwrap()), checked));
    }
    worst
}

fn pool_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    let spec = PoolSpec {
        window_h: rng.gen_range(1..=3),
        window_w: rng.gen_range(1..=3),
        stride_h: rng.gen_range(1..=3),
        stride_w: rng.gen_range(1..=3),
    };
    let mut x = random(&[rng.gen_range(1..=3), rng.gen_range(3..=7), rng.gen_range(3..=7)], rng);
    let pooled = maxpool2d(&x, &spec).unwrap();
    let r = random(pooled.output.shape(), rng);
    let g = maxpool2d_backward(x.shape(), &pooled.argmax, &r).unwrap();
    sweep(&mut x, &g, |xx| project(&r, &maxpool2d(xx, &spec).unwrap().output), checked)
}

fn dense_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    let (n_in, n_out) = (rng.gen_range(1..=12), rng.gen_range(1..=6));
    let mut x = random(&[n_in], rng);
    let mut w = random(&[n_out, n_in], rng);
    let mut b = random(&[n_out], rng);
    let r = random(&[n_out], rng);
    let g = dense_backward(&x, &w, &r).unwrap();
    let mut worst: f64 = 0.0;
    let (w0, b0) = (w.clone(), b.clone());
    worst = worst.max(sweep(&mut x, &g.input, |xx| project(&r, &dense(xx, &w0, &b0).unwrap()), checked));
    let x0 = x.clone();
    worst = worst.max(sweep(&mut w, &g.weights, |ww| project(&r, &dense(&x0, ww, &b0).unwrap()), checked));
    let w0 = w.clone();
    worst.max(sweep(&mut b, &g.bias, |bb| project(&r, &dense(&x0, &w0, bb).unwrap()), checked))
}

fn relu_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    // Keep inputs away from the kink so the central difference is exact.
    let mut x = Tensor::from_fn([rng.gen_range(1..=20)], |_| {
        let v: f64 = rng.gen_range(0.01..1.0);
        if rng.gen_bool(0.5) { v } else { -v }
    });
    let r = random(x.shape(), rng);
    let g = relu_backward(&x, &r);
    sweep(&mut x, &g, |xx| project(&r, &relu(xx)), checked)
}

fn softmax_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    let mut x = Tensor::from_fn([rng.gen_range(2..=8)], |_| rng.gen_range(-3.0..3.0));
    let r = random(x.shape(), rng);
    let g = softmax_backward(&softmax(&x), &r);
    sweep(&mut x, &g, |xx| project(&r, &softmax(xx)), checked)
}

fn lstm_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    let spec = LstmSpec {
        input_size: rng.gen_range(1..=4),
        hidden_size: rng.gen_range(1..=4),
        seq_len: rng.gen_range(1..=5),
    };
    let g4 = 4 * spec.hidden_size;
    let mut params = LstmParams {
        w_input: random(&[g4, spec.input_size], rng),
        w_hidden: random(&[g4, spec.hidden_size], rng),
        bias: random(&[g4], rng),
    };
    let mut x = random(&[spec.seq_len, spec.input_size], rng);
    let r = random(&[spec.hidden_size], rng);
    let run = |x: &Tensor, p: &LstmParams| {
        let (s, _) = lstm_sequence(x, &spec, p, None).unwrap();
        s.hidden.iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let (_, cache) = lstm_sequence(&x, &spec, &params, None).unwrap();
    let g = lstm_backward(&params, &cache, r.data()).unwrap();
    let mut worst: f64 = 0.0;
    let p0 = params.clone();
    worst = worst.max(sweep(&mut x, &g.inputs, |xx| run(xx, &p0), checked));
    let x0 = x.clone();
    let mut wi = params.w_input.clone();
    worst = worst.max(sweep(&mut wi, &g.params.w_input, |t| run(&x0, &LstmParams { w_input: t.clone(), ..p0.clone() }), checked));
    let mut wh = params.w_hidden.clone();
    worst = worst.max(sweep(&mut wh, &g.params.w_hidden, |t| run(&x0, &LstmParams { w_hidden: t.clone(), ..p0.clone() }), checked));
    worst = worst.max(sweep(&mut params.bias, &g.params.bias, |t| run(&x0, &LstmParams { bias: t.clone(), ..p0.clone() }), checked));
    worst
}

fn cross_entropy_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    let n = rng.gen_range(2..=6);
    let label = rng.gen_range(0..n);
    let mut logits = Tensor::from_fn([n], |_| rng.gen_range(-3.0..3.0));
    let (_, g) = cross_entropy_loss(&softmax(&logits), label).unwrap();
    sweep(&mut logits, &g, |l| cross_entropy_loss(&softmax(l), label).unwrap().0, checked)
}

fn l2_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    let target = [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)];
    let mut pred = Tensor::from_fn([2], |_| rng.gen_range(-1.0..1.0));
    let (_, g) = additive_l2_loss(&pred, &target).unwrap();
    sweep(&mut pred, &g, |p| additive_l2_loss(p, &target).unwrap().0, checked)
}

/// Toy regression network: conv → relu → pool → grouped conv → relu per
/// frame, LSTM over the frame features, dense head with bounded outputs.
pub fn toy_regressor_spec(seq_len: usize) -> NetworkSpec {
    NetworkSpec {
        name: "rn".into(),
        input: [6, 6, 8],
        frame_layers: vec![
            LayerSpec::Conv(ConvSpec::same(6, 4, 3, 1)),
            LayerSpec::Relu,
            LayerSpec::MaxPool(PoolSpec::square(2, 2)),
            LayerSpec::Conv(ConvSpec::same(4, 4, 3, 2).without_bias()),
            LayerSpec::Relu,
            LayerSpec::MaxPool(PoolSpec::square(2, 2)),
        ],
        recurrent: Some(LstmSpec { input_size: 4 * 1 * 2, hidden_size: 5, seq_len }),
        head_layers: vec![LayerSpec::Dense { inputs: 5, outputs: 2 }],
        output: OutputHead::SteerThrottle,
    }
}

/// Every parameter of a toy regressor against central differences of the
/// additive L2 loss.
pub fn network_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    let spec = toy_regressor_spec(rng.gen_range(2..=5));
    let net = Network::new(spec.clone(), rng).unwrap();
    let frames: Vec<Tensor> = (0..spec.seq_len()).map(|_| Tensor::from_fn([6, 6, 8], |_| rng.gen_range(0.0..1.0))).collect();
    let target = [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)];
    let cache = net.forward(&frames).unwrap();
    let (_, g) = additive_l2_loss(cache.output(), &target).unwrap();
    let grads = net.backward(&cache, OutputGrad::Output(g)).unwrap();
    let mut worst: f64 = 0.0;
    for slot in 0..net.params().len() {
        let mut p = net.params()[slot].clone();
        let loss = |t: &Tensor| {
            let mut params = net.params().to_vec();
            params[slot] = t.clone();
            let n = Network::from_params(spec.clone(), params).unwrap();
            let out = n.infer(&frames, None).unwrap().output;
            additive_l2_loss(&out, &target).unwrap().0
        };
        worst = worst.max(sweep(&mut p, &grads.tensors[slot], loss, checked));
    }
    worst
}

/// Softmax classifier head through the network path, fed a gradient on the
/// probabilities rather than the logits. No ReLU here: a pre-activation
/// within ε of zero would put a kink inside the difference stencil.
fn classifier_case(rng: &mut ChaCha8Rng, checked: &mut usize) -> f64 {
    let spec = NetworkSpec {
        name: "mcn".into(),
        input: [2, 4, 4],
        frame_layers: vec![LayerSpec::Conv(ConvSpec::same(2, 4, 3, 2)), LayerSpec::MaxPool(PoolSpec::square(2, 2))],
        recurrent: None,
        head_layers: vec![LayerSpec::Dense { inputs: 16, outputs: 3 }],
        output: OutputHead::Softmax,
    };
    let net = Network::new(spec.clone(), rng).unwrap();
    let frame = vec![Tensor::from_fn([2, 4, 4], |_| rng.gen_range(-1.0..1.0))];
    let r = random(&[3], rng);
    let cache = net.forward(&frame).unwrap();
    let grads = net.backward(&cache, OutputGrad::Output(r.clone())).unwrap();
    let mut worst: f64 = 0.0;
    for slot in 0..net.params().len() {
        let mut p = net.params()[slot].clone();
        let loss = |t: &Tensor| {
            let mut params = net.params().to_vec();
            params[slot] = t.clone();
            let n = Network::from_params(spec.clone(), params).unwrap();
            project(&r, &n.infer(&frame, None).unwrap().output)
        };
        worst = worst.max(sweep(&mut p, &grads.tensors[slot], loss, checked));
    }
    worst
}

type Case = fn(&mut ChaCha8Rng, &mut usize) -> f64;

pub fn run_suite(configs: usize, seed: u64) -> Vec<CheckReport> {
    let cases: Vec<(&'static str, Case)> = vec![
        ("conv2d", |r, c| conv_case(r, false, c)),
        ("grouped_conv2d", |r, c| conv_case(r, true, c)),
        ("maxpool2d", pool_case),
        ("dense", dense_case),
        ("relu", relu_case),
        ("softmax", softmax_case),
        ("lstm", lstm_case),
        ("cross_entropy", cross_entropy_case),
        ("additive_l2", l2_case),
        ("softmax_network", classifier_case),
        ("regressor_network", network_case),
    ];
    cases
        .into_iter()
        .enumerate()
        .map(|(i, (name, case))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64 * 7919));
            let mut checked = 0;
            let worst = (0..configs).map(|_| case(&mut rng, &mut checked)).fold(0.0, f64::max);
            CheckReport { name, configs, checked, worst_rel: worst }
        })
        .collect()
}
