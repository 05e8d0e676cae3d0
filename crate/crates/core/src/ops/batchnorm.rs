//! Per-channel batch normalization over the (N, H, W) axes.

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub eps: f64,
    /// Weight of the newest batch in the running averages.
    pub momentum: f64,
}

impl Default for BatchNormParams {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: Mode,
    xhat: Tensor,
    inv_std: Vec<f64>,
}

/// `(n, c, spatial)` view of a 2-D `[N, C]` or 4-D `[N, C, H, W]` tensor.
fn layout(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[n, c] => Ok((n, c, 1)),
        &[n, c, h, w] => Ok((n, c, h * w)),
        s => shape_err(format!("batch-norm input must be [N,C] or [N,C,H,W], got {s:?}")),
    }
}

pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta_shift: &Tensor,
    params: &BatchNormParams,
    mode: Mode,
    running: &mut RunningStats,
) -> Result<(Tensor, BatchNormCache)> {
    let (n, c, hw) = layout(input)?;
    if gamma.shape() != [c] || beta_shift.shape() != [c] {
        return shape_err(format!(
            "gamma/beta must have shape [{c}], got {:?} and {:?}",
            gamma.shape(),
            beta_shift.shape()
        ));
    }
    if running.mean.len() != c || running.var.len() != c {
        return shape_err(format!(
            "running statistics cover {} channels, input has {c}",
            running.mean.len()
        ));
    }
    let count = n * hw;
    if mode == Mode::Train && count == 0 {
        return arg_err("batch normalization in train mode needs a non-empty batch");
    }
    let x = input.data();
    let at = |b: usize, ch: usize| (b * c + ch) * hw;

    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for b in 0..n {
                    s += x[at(b, ch)..at(b, ch) + hw].iter().sum::<f64>();
                }
                let mu = s / count as f64;
                let mut v = 0.0;
                for b in 0..n {
                    v += x[at(b, ch)..at(b, ch) + hw]
                        .iter()
                        .map(|&e| (e - mu) * (e - mu))
                        .sum::<f64>();
                }
                mean[ch] = mu;
                var[ch] = v / count as f64;
            }
            let m = params.momentum;
            let unbias = if count > 1 {
                count as f64 / (count - 1) as f64
            } else {
                1.0
            };
            for ch in 0..c {
                running.mean[ch] = (1.0 - m) * running.mean[ch] + m * mean[ch];
                running.var[ch] = (1.0 - m) * running.var[ch] + m * var[ch] * unbias;
            }
            (mean, var)
        }
        Mode::Infer => (running.mean.clone(), running.var.clone()),
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + params.eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    let (g, bt) = (gamma.data(), beta_shift.data());
    for b in 0..n {
        for ch in 0..c {
            for i in at(b, ch)..at(b, ch) + hw {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                y[i] = g[ch] * xh + bt[ch];
            }
        }
    }
    Ok((
        Tensor::new(input.shape(), y)?,
        BatchNormCache {
            mode,
            xhat: Tensor::new(input.shape(), xhat)?,
            inv_std,
        },
    ))
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    cache.xhat.expect_same_shape(grad_out, "batch-norm grad_out")?;
    let (n, c, hw) = layout(grad_out)?;
    if gamma.shape() != [c] {
        return shape_err(format!("gamma must have shape [{c}], got {:?}", gamma.shape()));
    }
    let at = |b: usize, ch: usize| (b * c + ch) * hw;
    let dy = grad_out.data();
    let xh = cache.xhat.data();
    let g = gamma.data();
    let count = (n * hw) as f64;

    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ch in 0..c {
        for b in 0..n {
            for i in at(b, ch)..at(b, ch) + hw {
                dgamma[ch] += dy[i] * xh[i];
                dbeta[ch] += dy[i];
            }
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for ch in 0..c {
        let k = g[ch] * cache.inv_std[ch];
        for b in 0..n {
            for i in at(b, ch)..at(b, ch) + hw {
                dx[i] = match cache.mode {
                    Mode::Train => k * (dy[i] - dbeta[ch] / count - xh[i] * dgamma[ch] / count),
                    Mode::Infer => k * dy[i],
                };
            }
        }
    }
    Ok((
        Tensor::new(grad_out.shape(), dx)?,
        Tensor::new(&[c], dgamma)?,
        Tensor::new(&[c], dbeta)?,
    ))
}
