//! Cross-channel local response normalization:
//! `b_c = a_c / (k + alpha · Σ_{c' ∈ [c − n/2, c + n/2]} a_{c'}²)^beta`.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    /// Window size in channels; the half-width is `depth_radius / 2`.
    pub depth_radius: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        Self {
            depth_radius: 5,
            k: 2.0,
            alpha: 1e-4,
            beta: 0.75,
        }
    }
}

impl LrnParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth_radius < 1 {
            return arg_err("LRN depth radius must be at least 1");
        }
        if !(self.k > 0.0) {
            return arg_err(format!("LRN offset k must be positive, got {}", self.k));
        }
        if !(self.alpha >= 0.0) {
            return arg_err(format!("LRN alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.beta > 0.0) {
            return arg_err(format!("LRN beta must be positive, got {}", self.beta));
        }
        Ok(())
    }

    fn window(&self, c: usize, channels: usize) -> std::ops::Range<usize> {
        let half = self.depth_radius / 2;
        c.saturating_sub(half)..(c + half + 1).min(channels)
    }
}

/// Per-element denominators `s = k + alpha·Σ a²` over the channel window.
fn scales(input: &Tensor, p: &LrnParams) -> Result<Vec<f64>> {
    let [n, c, h, w] = input.dims4("LRN input")?;
    let hw = h * w;
    let x = input.data();
    let mut s = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let dst = (b * c + ch) * hw;
            for pos in 0..hw {
                let acc: f64 = p
                    .window(ch, c)
                    .map(|cc| {
                        let v = x[(b * c + cc) * hw + pos];
                        v * v
                    })
                    .sum();
                s[dst + pos] = p.k + p.alpha * acc;
            }
        }
    }
    Ok(s)
}

pub fn lrn_forward(input: &Tensor, params: &LrnParams) -> Result<Tensor> {
    params.validate()?;
    let s = scales(input, params)?;
    let data = input
        .data()
        .iter()
        .zip(&s)
        .map(|(&a, &s)| a / s.powf(params.beta))
        .collect();
    Tensor::new(input.shape(), data)
}

pub fn lrn_backward(input: &Tensor, params: &LrnParams, grad_out: &Tensor) -> Result<Tensor> {
    params.validate()?;
    input.expect_same_shape(grad_out, "LRN grad_out")?;
    let [n, c, h, w] = input.dims4("LRN input")?;
    let hw = h * w;
    let s = scales(input, params)?;
    let x = input.data();
    let g = grad_out.data();
    // t_c = g_c · a_c · s_c^(−beta−1); the window relation is symmetric, so
    // ∂L/∂a_j = g_j s_j^(−beta) − 2·alpha·beta·a_j·Σ_{c ∈ window(j)} t_c.
    let t: Vec<f64> = (0..x.len())
        .map(|i| g[i] * x[i] * s[i].powf(-params.beta - 1.0))
        .collect();
    let coef = 2.0 * params.alpha * params.beta;
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * hw;
            for pos in 0..hw {
                let i = base + pos;
                let cross: f64 = params
                    .window(ch, c)
                    .map(|cc| t[(b * c + cc) * hw + pos])
                    .sum();
                out[i] = g[i] * s[i].powf(-params.beta) - coef * x[i] * cross;
            }
        }
    }
    Tensor::new(input.shape(), out)
}
