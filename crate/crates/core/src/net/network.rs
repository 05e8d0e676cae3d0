use rand_distr::{Distribution, Normal};

use super::spec::{LayerSpec, NetworkSpec};
use crate::error::{shape_err, Error, Result};
use crate::ops::{self, conv::conv2d_backward_opt, Mode, PoolIndices, RunningStats};
use crate::rng;
use crate::tensor::Tensor;

/// A network specification plus its parameters and batch-norm buffers.
///
/// `params[i]` holds the trainable tensors of layer `i` (weight then bias for
/// conv/dense, gamma then beta for batch norm, nothing otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Vec<Tensor>>,
    running: Vec<Option<RunningStats>>,
}

/// Gradients laid out exactly like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<Vec<Tensor>>,
}

impl ParamGrads {
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flatten()
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Input(Tensor),
    Output(Tensor),
    MaxPool(PoolIndices),
    Shape(Vec<usize>),
    BatchNorm(ops::BatchNormCache),
    Mask(Tensor),
    None,
}

/// Activations retained by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    layers: Vec<LayerCache>,
}

/// Whether the weights of layer `i` feed a ReLU (He init) or not (Xavier).
fn feeds_relu(layers: &[LayerSpec], i: usize) -> bool {
    for l in &layers[i + 1..] {
        match l {
            LayerSpec::Relu => return true,
            LayerSpec::Sigmoid
            | LayerSpec::Conv(_)
            | LayerSpec::Dense { .. }
            | LayerSpec::SoftmaxOutput => return false,
            _ => {}
        }
    }
    false
}

impl Network {
    /// He-normal weights ahead of ReLU, Xavier-normal elsewhere, zero biases,
    /// unit gamma. Each layer draws from its own `(seed, layer index)` stream.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let inputs = spec.input_shapes()?;
        let mut params = Vec::with_capacity(spec.layers.len());
        let mut running = Vec::with_capacity(spec.layers.len());
        for (i, (layer, input)) in spec.layers.iter().zip(&inputs).enumerate() {
            let shapes = layer.param_shapes(input);
            let tensors = match layer {
                LayerSpec::Conv(_) | LayerSpec::Dense { .. } => {
                    let wshape = &shapes[0];
                    let (fan_in, fan_out) = match layer {
                        LayerSpec::Conv(p) => {
                            let k = p.kernel_h * p.kernel_w;
                            (wshape[1] * k, wshape[0] * k)
                        }
                        _ => (wshape[0], wshape[1]),
                    };
                    let std = if feeds_relu(&spec.layers, i) {
                        (2.0 / fan_in as f64).sqrt()
                    } else {
                        (2.0 / (fan_in + fan_out) as f64).sqrt()
                    };
                    let normal = Normal::new(0.0, std).expect("finite std");
                    let mut r = rng::stream_at(seed, "init", i as u64);
                    vec![
                        Tensor::from_fn(wshape, |_| normal.sample(&mut r)),
                        Tensor::zeros(&shapes[1]),
                    ]
                }
                LayerSpec::BatchNorm(_) => {
                    vec![Tensor::filled(&shapes[0], 1.0), Tensor::zeros(&shapes[1])]
                }
                _ => Vec::new(),
            };
            running.push(match layer {
                LayerSpec::BatchNorm(_) => Some(RunningStats::new(input[0])),
                _ => None,
            });
            params.push(tensors);
        }
        Ok(Self {
            spec: spec.clone(),
            params,
            running,
        })
    }

    /// Assembles a network from stored tensors, checking every shape against
    /// the spec.
    pub fn from_parts(
        spec: NetworkSpec,
        params: Vec<Vec<Tensor>>,
        running: Vec<Option<RunningStats>>,
    ) -> Result<Self> {
        let expected = spec.param_shapes()?;
        if params.len() != expected.len() || running.len() != expected.len() {
            return Err(Error::CheckpointShape(format!(
                "{} parameter groups for {} layers",
                params.len(),
                expected.len()
            )));
        }
        for (i, (have, want)) in params.iter().zip(&expected).enumerate() {
            let have: Vec<&[usize]> = have.iter().map(|t| t.shape()).collect();
            let want: Vec<&[usize]> = want.iter().map(|s| s.as_slice()).collect();
            if have != want {
                return Err(Error::CheckpointShape(format!(
                    "layer {i}: tensors {have:?}, spec requires {want:?}"
                )));
            }
        }
        for (i, (layer, stats)) in spec.layers.iter().zip(&running).enumerate() {
            let ok = match (layer, stats) {
                (LayerSpec::BatchNorm(_), Some(s)) => {
                    let c = expected[i][0][0];
                    s.mean.len() == c && s.var.len() == c
                }
                (LayerSpec::BatchNorm(_), None) => false,
                (_, s) => s.is_none(),
            };
            if !ok {
                return Err(Error::CheckpointShape(format!(
                    "layer {i}: running statistics do not match the spec"
                )));
            }
        }
        Ok(Self {
            spec,
            params,
            running,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor>] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[Option<RunningStats>] {
        &self.running
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let [n, c, h, w] = batch.dims4("network input batch")?;
        if [c, h, w] != self.spec.input_shape {
            return shape_err(format!(
                "batch samples are {:?} but `{}` expects {:?}",
                [c, h, w],
                self.spec.name,
                self.spec.input_shape
            ));
        }
        Ok(n)
    }

    /// Runs the network and returns logits `[N, num_classes]` plus the cache
    /// needed by [`Network::backward`]. Train mode updates batch-norm running
    /// statistics and draws dropout masks from `seed`.
    pub fn forward(&mut self, batch: &Tensor, mode: Mode, seed: u64) -> Result<(Tensor, ForwardCache)> {
        let n = self.check_batch(batch)?;
        let (logits, layers) = run(&self.spec, &self.params, &mut self.running, batch, mode, seed, true)?;
        Ok((logits, ForwardCache { batch: n, layers }))
    }

    /// Inference-mode logits; leaves the network untouched.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut running = self.running.clone();
        let (logits, _) = run(&self.spec, &self.params, &mut running, batch, Mode::Infer, 0, false)?;
        Ok(logits)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<ParamGrads> {
        if cache.layers.len() != self.spec.layers.len() {
            return shape_err(format!(
                "cache covers {} layers, network has {}",
                cache.layers.len(),
                self.spec.layers.len()
            ));
        }
        if grad_logits.shape() != [cache.batch, self.spec.num_classes] {
            return shape_err(format!(
                "grad_logits has shape {:?}, expected [{}, {}]",
                grad_logits.shape(),
                cache.batch,
                self.spec.num_classes
            ));
        }
        let mut grads: Vec<Vec<Tensor>> = vec![Vec::new(); self.spec.layers.len()];
        let mut g = grad_logits.clone();
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let p = &self.params[i];
            let mismatch = || Error::Shape(format!("cache entry {i} does not match layer kind"));
            g = match (layer, &cache.layers[i]) {
                (LayerSpec::Conv(cp), LayerCache::Input(x)) => {
                    let r = conv2d_backward_opt(x, &p[0], cp, &g, i > 0)?;
                    grads[i] = vec![r.weights, r.bias];
                    match r.input {
                        Some(gx) => gx,
                        None => break,
                    }
                }
                (LayerSpec::Dense { .. }, LayerCache::Input(x)) => {
                    let r = ops::dense_backward(x, &p[0], &g)?;
                    grads[i] = vec![r.weights, r.bias];
                    r.input
                }
                (LayerSpec::MaxPool(_), LayerCache::MaxPool(idx)) => ops::maxpool_backward(idx, &g)?,
                (LayerSpec::AvgPool(pp), LayerCache::Shape(s)) => ops::avgpool_backward(s, pp, &g)?,
                (LayerSpec::Relu, LayerCache::Input(x)) => ops::relu_backward(x, &g)?,
                (LayerSpec::Sigmoid, LayerCache::Output(y)) => ops::sigmoid_backward(y, &g)?,
                (LayerSpec::Lrn(lp), LayerCache::Input(x)) => ops::lrn_backward(x, lp, &g)?,
                (LayerSpec::BatchNorm(_), LayerCache::BatchNorm(c)) => {
                    let (gx, gg, gb) = ops::batchnorm_backward(c, &p[0], &g)?;
                    grads[i] = vec![gg, gb];
                    gx
                }
                (LayerSpec::Dropout { rate }, LayerCache::Mask(m)) => ops::dropout_backward(m, *rate, &g)?,
                (LayerSpec::Flatten, LayerCache::Shape(s)) => g.reshape(s)?,
                (LayerSpec::SoftmaxOutput, LayerCache::None) => g,
                _ => return Err(mismatch()),
            };
        }
        // layers skipped by the early exit above still need zero-free slots
        for (i, slot) in grads.iter_mut().enumerate() {
            if slot.is_empty() && !self.params[i].is_empty() {
                *slot = self.params[i].iter().map(Tensor::zeros_like).collect();
            }
        }
        Ok(ParamGrads { layers: grads })
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            layers: self
                .params
                .iter()
                .map(|ts| ts.iter().map(Tensor::zeros_like).collect())
                .collect(),
        }
    }
}

fn run(
    spec: &NetworkSpec,
    params: &[Vec<Tensor>],
    running: &mut [Option<RunningStats>],
    batch: &Tensor,
    mode: Mode,
    seed: u64,
    keep: bool,
) -> Result<(Tensor, Vec<LayerCache>)> {
    let mut caches = Vec::with_capacity(if keep { spec.layers.len() } else { 0 });
    let mut x = batch.clone();
    for (i, layer) in spec.layers.iter().enumerate() {
        let p = &params[i];
        let (y, cache) = match layer {
            LayerSpec::Conv(cp) => {
                let y = ops::conv2d_forward(&x, &p[0], &p[1], cp)?;
                (y, LayerCache::Input(x))
            }
            LayerSpec::Dense { .. } => {
                let y = ops::dense_forward(&x, &p[0], &p[1])?;
                (y, LayerCache::Input(x))
            }
            LayerSpec::MaxPool(pp) => {
                let (y, idx) = ops::maxpool_forward(&x, pp)?;
                (y, LayerCache::MaxPool(idx))
            }
            LayerSpec::AvgPool(pp) => {
                let y = ops::avgpool_forward(&x, pp)?;
                (y, LayerCache::Shape(x.shape().to_vec()))
            }
            LayerSpec::Relu => (ops::relu(&x), LayerCache::Input(x)),
            LayerSpec::Sigmoid => {
                let y = ops::sigmoid(&x);
                let c = if keep { LayerCache::Output(y.clone()) } else { LayerCache::None };
                (y, c)
            }
            LayerSpec::Lrn(lp) => {
                let y = ops::lrn_forward(&x, lp)?;
                (y, LayerCache::Input(x))
            }
            LayerSpec::BatchNorm(bp) => {
                let stats = running[i]
                    .as_mut()
                    .ok_or_else(|| Error::Shape(format!("layer {i} has no running statistics")))?;
                let (y, c) = ops::batchnorm_forward(&x, &p[0], &p[1], bp, mode, stats)?;
                (y, LayerCache::BatchNorm(c))
            }
            LayerSpec::Dropout { rate } => {
                let (y, m) = ops::dropout(&x, *rate, rng::derive_seed_at(seed, "dropout", i as u64), mode)?;
                (y, LayerCache::Mask(m))
            }
            LayerSpec::Flatten => {
                let shape = x.shape().to_vec();
                (ops::flatten(&x)?, LayerCache::Shape(shape))
            }
            LayerSpec::SoftmaxOutput => (x, LayerCache::None),
        };
        if keep {
            caches.push(cache);
        }
        x = y;
    }
    Ok((x, caches))
}
