//! Direct nested-loop reference kernels for the GEMM-backed layers.
//! Slow by design; they exist to cross-check the optimized paths.

use super::conv::ConvParams;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Direct convolution: six nested loops, zero padding read as 0.
pub fn conv2d_naive(input: &Tensor, weights: &Tensor, bias: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let [n, cin, h, w] = input.dims4("conv input")?;
    let [cout, wcin, kh, kw] = weights.dims4("conv weights")?;
    if wcin != cin || cout != p.out_channels || bias.shape() != [cout] {
        return shape_err("naive conv operands disagree");
    }
    let (ho, wo) = p.output_hw(h, w)?;
    let mut out = Tensor::zeros(&[n, cout, ho, wo]);
    for b in 0..n {
        for co in 0..cout {
            for y in 0..ho {
                for x in 0..wo {
                    let mut acc = bias.data()[co];
                    for ci in 0..cin {
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = (y * p.stride + dy) as isize - p.padding as isize;
                                let ix = (x * p.stride + dx) as isize - p.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let v = input.data()[((b * cin + ci) * h + iy as usize) * w + ix as usize];
                                acc += v * weights.data()[((co * cin + ci) * kh + dy) * kw + dx];
                            }
                        }
                    }
                    out.data_mut()[((b * cout + co) * ho + y) * wo + x] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// `input · weights + bias` by explicit triple loop.
pub fn dense_naive(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [n, d] = input.dims2("dense input")?;
    let [wd, m] = weights.dims2("dense weights")?;
    if wd != d || bias.shape() != [m] {
        return shape_err("naive dense operands disagree");
    }
    let mut out = Tensor::zeros(&[n, m]);
    for r in 0..n {
        for j in 0..m {
            let mut acc = bias.data()[j];
            for i in 0..d {
                acc += input.data()[r * d + i] * weights.data()[i * m + j];
            }
            out.data_mut()[r * m + j] = acc;
        }
    }
    Ok(out)
}
