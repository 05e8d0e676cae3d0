//! Central finite-difference checks for every layer backward pass and for a
//! small whole network.
//!
//! Each check projects the layer output onto a random cotangent `g`, so the
//! scalar under test is `Σ g ⊙ f(x)`, and compares the analytic gradient of
//! that scalar with `(L(x + h) − L(x − h)) / 2h`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::net::spec::{LayerKind, LayerSpec, NetworkSpec};
use crate::net::Network;
use crate::ops::{self, BatchNormParams, ConvParams, LrnParams, Mode, PoolParams, RunningStats};
use crate::rng;
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor so that gradients that are zero on both sides compare equal.
const FLOOR: f64 = 1e-5;
pub const DEFAULT_CONFIGS: usize = 20;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn max_rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, f64::max)
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &Tensor, mut f: impl FnMut(&Tensor) -> Result<f64>) -> Result<Tensor> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros_like(x);
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + STEP;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - STEP;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * STEP);
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub name: String,
    pub configs: usize,
    /// Number of scalar partial derivatives compared.
    pub checked: usize,
    pub max_rel_error: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

fn uniform(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.gen_range(-1.0..1.0))
}

/// Values bounded away from zero, for kinked activations.
fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m = r.gen_range(0.01..1.0);
        if r.gen_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced far apart relative to the step, so no max flips.
fn distinct(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    v.shuffle(r);
    Tensor::new(shape, v).expect("shape product matches")
}

/// Accumulates the comparison of one analytic gradient against its numeric twin.
#[derive(Default)]
struct Tally {
    checked: usize,
    worst: f64,
}

impl Tally {
    fn compare(&mut self, analytic: &Tensor, x: &Tensor, f: impl FnMut(&Tensor) -> Result<f64>) -> Result<()> {
        let numeric = numeric_grad(x, f)?;
        self.worst = self.worst.max(max_rel_error(analytic, &numeric));
        self.checked += x.len();
        Ok(())
    }
}

fn check_conv(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let n = r.gen_range(1..=2);
    let cin = r.gen_range(1..=2);
    let (h, w) = (r.gen_range(3..=6), r.gen_range(3..=6));
    let p = ConvParams {
        out_channels: r.gen_range(1..=3),
        kernel_h: r.gen_range(1..=3),
        kernel_w: r.gen_range(1..=3),
        stride: r.gen_range(1..=2),
        padding: r.gen_range(0..=1),
    };
    let x = uniform(&[n, cin, h, w], r);
    let wt = uniform(&[p.out_channels, cin, p.kernel_h, p.kernel_w], r);
    let b = uniform(&[p.out_channels], r);
    let y = ops::conv2d_forward(&x, &wt, &b, &p)?;
    let g = uniform(y.shape(), r);
    let grads = ops::conv2d_backward(&x, &wt, &p, &g)?;
    let gx = grads.input.expect("input gradient requested");
    t.compare(&gx, &x, |x| Ok(ops::conv2d_forward(x, &wt, &b, &p)?.dot(&g)))?;
    t.compare(&grads.weights, &wt, |wt| Ok(ops::conv2d_forward(&x, wt, &b, &p)?.dot(&g)))?;
    t.compare(&grads.bias, &b, |b| Ok(ops::conv2d_forward(&x, &wt, b, &p)?.dot(&g)))
}

fn pool_config(r: &mut ChaCha8Rng) -> ([usize; 4], PoolParams) {
    let shape = [r.gen_range(1..=2), r.gen_range(1..=2), r.gen_range(3..=6), r.gen_range(3..=6)];
    let p = PoolParams {
        window_h: r.gen_range(1..=3),
        window_w: r.gen_range(1..=3),
        stride: r.gen_range(1..=3),
    };
    (shape, p)
}

fn check_maxpool(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let (shape, p) = pool_config(r);
    let x = distinct(&shape, r);
    let (y, idx) = ops::maxpool_forward(&x, &p)?;
    let g = uniform(y.shape(), r);
    let gx = ops::maxpool_backward(&idx, &g)?;
    t.compare(&gx, &x, |x| Ok(ops::maxpool_forward(x, &p)?.0.dot(&g)))
}

fn check_avgpool(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let (shape, p) = pool_config(r);
    let x = uniform(&shape, r);
    let y = ops::avgpool_forward(&x, &p)?;
    let g = uniform(y.shape(), r);
    let gx = ops::avgpool_backward(x.shape(), &p, &g)?;
    t.compare(&gx, &x, |x| Ok(ops::avgpool_forward(x, &p)?.dot(&g)))
}

fn small_shape(r: &mut ChaCha8Rng) -> Vec<usize> {
    vec![r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=4), r.gen_range(1..=4)]
}

fn check_relu(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let x = away_from_zero(&small_shape(r), r);
    let g = uniform(x.shape(), r);
    let gx = ops::relu_backward(&x, &g)?;
    t.compare(&gx, &x, |x| Ok(ops::relu(x).dot(&g)))
}

fn check_sigmoid(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let x = uniform(&small_shape(r), r).map(|v| 3.0 * v);
    let g = uniform(x.shape(), r);
    let gx = ops::sigmoid_backward(&ops::sigmoid(&x), &g)?;
    t.compare(&gx, &x, |x| Ok(ops::sigmoid(x).dot(&g)))
}

fn check_lrn(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let shape = [r.gen_range(1..=2), r.gen_range(1..=6), 2, 2];
    let p = LrnParams {
        depth_radius: r.gen_range(1..=5),
        k: r.gen_range(0.5..2.5),
        // the default alpha barely perturbs the identity; larger values exercise the cross terms
        alpha: [1e-4, 0.05, 0.5][r.gen_range(0..3)],
        beta: r.gen_range(0.5..1.0),
    };
    let x = uniform(&shape, r).map(|v| 2.0 * v);
    let g = uniform(x.shape(), r);
    let gx = ops::lrn_backward(&x, &p, &g)?;
    t.compare(&gx, &x, |x| Ok(ops::lrn_forward(x, &p)?.dot(&g)))
}

fn check_batchnorm(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let n = r.gen_range(2..=3);
    let c = r.gen_range(1..=3);
    let shape = if r.gen_bool(0.3) {
        vec![n, c]
    } else {
        vec![n, c, r.gen_range(1..=3), r.gen_range(1..=3)]
    };
    let p = BatchNormParams::default();
    let x = uniform(&shape, r);
    let gamma = uniform(&[c], r).map(|v| v + 1.5);
    let beta = uniform(&[c], r);
    let fwd = |x: &Tensor, gm: &Tensor, bt: &Tensor| -> Result<Tensor> {
        let mut stats = RunningStats::new(c);
        Ok(ops::batchnorm_forward(x, gm, bt, &p, Mode::Train, &mut stats)?.0)
    };
    let mut stats = RunningStats::new(c);
    let (y, cache) = ops::batchnorm_forward(&x, &gamma, &beta, &p, Mode::Train, &mut stats)?;
    let g = uniform(y.shape(), r);
    let (gx, gg, gb) = ops::batchnorm_backward(&cache, &gamma, &g)?;
    t.compare(&gx, &x, |x| Ok(fwd(x, &gamma, &beta)?.dot(&g)))?;
    t.compare(&gg, &gamma, |gm| Ok(fwd(&x, gm, &beta)?.dot(&g)))?;
    t.compare(&gb, &beta, |bt| Ok(fwd(&x, &gamma, bt)?.dot(&g)))
}

fn check_dropout(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let x = uniform(&small_shape(r), r);
    let rate = r.gen_range(0.0..0.9);
    let seed = r.gen();
    let (y, mask) = ops::dropout(&x, rate, seed, Mode::Train)?;
    let g = uniform(y.shape(), r);
    let gx = ops::dropout_backward(&mask, rate, &g)?;
    t.compare(&gx, &x, |x| Ok(ops::dropout(x, rate, seed, Mode::Train)?.0.dot(&g)))
}

fn check_flatten(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let x = uniform(&small_shape(r), r);
    let y = ops::flatten(&x)?;
    let g = uniform(y.shape(), r);
    let gx = g.clone().reshape(x.shape())?;
    t.compare(&gx, &x, |x| Ok(ops::flatten(x)?.dot(&g)))
}

fn check_dense(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let (n, d, m) = (r.gen_range(1..=3), r.gen_range(1..=6), r.gen_range(1..=5));
    let x = uniform(&[n, d], r);
    let wt = uniform(&[d, m], r);
    let b = uniform(&[m], r);
    let y = ops::dense_forward(&x, &wt, &b)?;
    let g = uniform(y.shape(), r);
    let grads = ops::dense_backward(&x, &wt, &g)?;
    t.compare(&grads.input, &x, |x| Ok(ops::dense_forward(x, &wt, &b)?.dot(&g)))?;
    t.compare(&grads.weights, &wt, |wt| Ok(ops::dense_forward(&x, wt, &b)?.dot(&g)))?;
    t.compare(&grads.bias, &b, |b| Ok(ops::dense_forward(&x, &wt, b)?.dot(&g)))
}

fn check_softmax(r: &mut ChaCha8Rng, t: &mut Tally) -> Result<()> {
    let (n, k) = (r.gen_range(1..=4), r.gen_range(2..=5));
    let logits = uniform(&[n, k], r).map(|v| 3.0 * v);
    let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
    let out = ops::softmax_xent(&logits, &labels)?;
    t.compare(&out.grad_logits, &logits, |l| Ok(ops::softmax_xent(l, &labels)?.loss))
}

/// Max relative error of one layer kind over `configs` random configurations.
pub fn check_layer(kind: LayerKind, configs: usize, seed: u64) -> Result<GradReport> {
    let mut tally = Tally::default();
    for i in 0..configs {
        let r = &mut rng::stream_at(seed, &format!("gradcheck/{}", kind.name()), i as u64);
        let t = &mut tally;
        match kind {
            LayerKind::Conv => check_conv(r, t),
            LayerKind::MaxPool => check_maxpool(r, t),
            LayerKind::AvgPool => check_avgpool(r, t),
            LayerKind::Relu => check_relu(r, t),
            LayerKind::Sigmoid => check_sigmoid(r, t),
            LayerKind::Lrn => check_lrn(r, t),
            LayerKind::BatchNorm => check_batchnorm(r, t),
            LayerKind::Dropout => check_dropout(r, t),
            LayerKind::Flatten => check_flatten(r, t),
            LayerKind::Dense => check_dense(r, t),
            LayerKind::SoftmaxOutput => check_softmax(r, t),
        }?;
    }
    Ok(GradReport {
        name: kind.name().to_string(),
        configs,
        checked: tally.checked,
        max_rel_error: tally.worst,
    })
}

/// Two conv blocks on an 8×8 input, ending in a dense softmax head.
pub fn tiny_network_spec(first: usize, second: usize, padding: usize, classes: usize) -> NetworkSpec {
    NetworkSpec {
        name: "tiny".into(),
        input_shape: [1, 8, 8],
        layers: vec![
            LayerSpec::Conv(ConvParams::square(first, 3, 1, padding)),
            LayerSpec::Relu,
            LayerSpec::BatchNorm(BatchNormParams::default()),
            LayerSpec::MaxPool(PoolParams::square(2, 2)),
            LayerSpec::Conv(ConvParams::square(second, 3, 1, padding)),
            LayerSpec::Sigmoid,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: classes },
            LayerSpec::SoftmaxOutput,
        ],
        num_classes: classes,
    }
}

/// Whole-network check of every parameter gradient against finite
/// differences of the mean cross-entropy loss.
pub fn check_network(configs: usize, seed: u64) -> Result<GradReport> {
    let mut tally = Tally::default();
    for i in 0..configs {
        let r = &mut rng::stream_at(seed, "gradcheck/network", i as u64);
        let classes = r.gen_range(2..=4);
        let spec = tiny_network_spec(r.gen_range(1..=3), r.gen_range(1..=3), r.gen_range(0..=1), classes);
        let mut net = Network::init(&spec, r.gen())?;
        let n = r.gen_range(2..=3);
        let x = uniform(&[n, 1, 8, 8], r);
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let (logits, cache) = net.forward(&x, Mode::Train, 0)?;
        let grads = net.backward(&cache, &ops::softmax_xent(&logits, &labels)?.grad_logits)?;
        for (l, layer_grads) in grads.layers.iter().enumerate() {
            for (j, analytic) in layer_grads.iter().enumerate() {
                let base = net.clone();
                let value = net.params()[l][j].clone();
                tally.compare(analytic, &value, |p| {
                    let mut probe = base.clone();
                    probe.params_mut()[l][j] = p.clone();
                    let (logits, _) = probe.forward(&x, Mode::Train, 0)?;
                    Ok(ops::softmax_xent(&logits, &labels)?.loss)
                })?;
            }
        }
    }
    Ok(GradReport {
        name: "network".into(),
        configs,
        checked: tally.checked,
        max_rel_error: tally.worst,
    })
}

/// One report per layer kind followed by the whole-network report.
pub fn run_suite(configs: usize, seed: u64) -> Result<Vec<GradReport>> {
    let mut out = LayerKind::ALL
        .iter()
        .map(|&k| check_layer(k, configs, seed))
        .collect::<Result<Vec<_>>>()?;
    out.push(check_network(configs, seed)?);
    Ok(out)
}
