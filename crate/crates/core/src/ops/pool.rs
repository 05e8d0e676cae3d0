//! Max and average pooling with floor semantics: trailing rows and columns
//! that cannot fill a whole window are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolParams {
    pub window_h: usize,
    pub window_w: usize,
    pub stride: usize,
}

impl PoolParams {
    pub fn square(window: usize, stride: usize) -> Self {
        Self {
            window_h: window,
            window_w: window,
            stride,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 || self.window_h == 0 || self.window_w == 0 {
            return arg_err("pooling window and stride must be at least 1");
        }
        if self.window_h > h || self.window_w > w {
            return shape_err(format!(
                "pooling window {}×{} is larger than the {h}×{w} input",
                self.window_h, self.window_w
            ));
        }
        Ok((
            (h - self.window_h) / self.stride + 1,
            (w - self.window_w) / self.stride + 1,
        ))
    }
}

/// Argmax bookkeeping from a max-pool forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    /// Linear input offset of the winning element for every output cell.
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

pub fn maxpool_forward(input: &Tensor, pool: &PoolParams) -> Result<(Tensor, PoolIndices)> {
    let [n, c, h, w] = input.dims4("max-pool input")?;
    let (ho, wo) = pool.output_hw(h, w)?;
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * pool.stride * w + ox * pool.stride;
                // Row-major scan with strict `>` keeps the lowest linear index on ties.
                for dy in 0..pool.window_h {
                    let row = base + (oy * pool.stride + dy) * w + ox * pool.stride;
                    for idx in row..row + pool.window_w {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let shape = [n, c, ho, wo];
    Ok((
        Tensor::new(&shape, out)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            output_shape: shape.to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool_backward(indices: &PoolIndices, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != indices.output_shape.as_slice() {
        return shape_err(format!(
            "grad_out has shape {:?} but the pooling indices belong to an output of shape {:?}",
            grad_out.shape(),
            indices.output_shape
        ));
    }
    let mut gx = Tensor::zeros(&indices.input_shape);
    let g = gx.data_mut();
    for (&idx, &go) in indices.argmax.iter().zip(grad_out.data()) {
        g[idx] += go;
    }
    Ok(gx)
}

pub fn avgpool_forward(input: &Tensor, pool: &PoolParams) -> Result<Tensor> {
    let [n, c, h, w] = input.dims4("avg-pool input")?;
    let (ho, wo) = pool.output_hw(h, w)?;
    let x = input.data();
    let scale = 1.0 / (pool.window_h * pool.window_w) as f64;
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut s = 0.0;
                for dy in 0..pool.window_h {
                    let row = base + (oy * pool.stride + dy) * w + ox * pool.stride;
                    s += x[row..row + pool.window_w].iter().sum::<f64>();
                }
                out.push(s * scale);
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out)
}

pub fn avgpool_backward(
    input_shape: &[usize],
    pool: &PoolParams,
    grad_out: &Tensor,
) -> Result<Tensor> {
    let probe = Tensor::zeros(input_shape);
    let [n, c, h, w] = probe.dims4("avg-pool input")?;
    let (ho, wo) = pool.output_hw(h, w)?;
    if grad_out.shape() != [n, c, ho, wo] {
        return shape_err(format!(
            "grad_out has shape {:?}, avg-pool output is {:?}",
            grad_out.shape(),
            [n, c, ho, wo]
        ));
    }
    let scale = 1.0 / (pool.window_h * pool.window_w) as f64;
    let mut gx = probe;
    let g = gx.data_mut();
    let go = grad_out.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let share = go[(plane * ho + oy) * wo + ox] * scale;
                for dy in 0..pool.window_h {
                    let row = base + (oy * pool.stride + dy) * w + ox * pool.stride;
                    g[row..row + pool.window_w]
                        .iter_mut()
                        .for_each(|v| *v += share);
                }
            }
        }
    }
    Ok(gx)
}
