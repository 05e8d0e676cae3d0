//! 2-D convolution lowered to GEMM through an im2col buffer.

use serde::{Deserialize, Serialize};

use super::{gemm, per_sample};
use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn square(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
        }
    }

    /// Output spatial extent for an `h × w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.stride == 0 {
            return arg_err("convolution stride must be at least 1");
        }
        if self.out_channels == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return arg_err("convolution needs at least one output channel and a non-empty kernel");
        }
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < self.kernel_h {
            return shape_err(format!(
                "height {h} (+2·{} padding) is smaller than kernel height {}",
                self.padding, self.kernel_h
            ));
        }
        if pw < self.kernel_w {
            return shape_err(format!(
                "width {w} (+2·{} padding) is smaller than kernel width {}",
                self.padding, self.kernel_w
            ));
        }
        Ok((
            (ph - self.kernel_h) / self.stride + 1,
            (pw - self.kernel_w) / self.stride + 1,
        ))
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn positions(&self) -> usize {
        self.ho * self.wo
    }
}

fn geometry(input: &Tensor, weights: &Tensor, params: &ConvParams) -> Result<Geometry> {
    let [n, cin, h, w] = input.dims4("conv input")?;
    let [cout, wcin, kh, kw] = weights.dims4("conv weights")?;
    if cout != params.out_channels {
        return shape_err(format!(
            "weights have {cout} output channels, params expect {}",
            params.out_channels
        ));
    }
    if wcin != cin {
        return shape_err(format!(
            "input has {cin} channels but weights expect {wcin} input channels"
        ));
    }
    if kh != params.kernel_h || kw != params.kernel_w {
        return shape_err(format!(
            "weights kernel is {kh}×{kw}, params expect {}×{}",
            params.kernel_h, params.kernel_w
        ));
    }
    let (ho, wo) = params.output_hw(h, w)?;
    Ok(Geometry {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        ho,
        wo,
        stride: params.stride,
        pad: params.padding,
    })
}

/// Unrolls one sample into a `[cin·kh·kw, ho·wo]` matrix.
fn im2col(x: &[f64], g: &Geometry, col: &mut [f64]) {
    let p = g.positions();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for dy in 0..g.kh {
            for dx in 0..g.kw {
                let row = &mut col[((ci * g.kh + dy) * g.kw + dx) * p..][..p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + dy) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + dx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds an im2col-shaped gradient back onto image layout.
fn col2im(col: &[f64], g: &Geometry, x: &mut [f64]) {
    let p = g.positions();
    for ci in 0..g.cin {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for dy in 0..g.kh {
            for dx in 0..g.kw {
                let row = &col[((ci * g.kh + dy) * g.kw + dx) * p..][..p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + dy) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + dx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += row[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    params: &ConvParams,
) -> Result<Tensor> {
    let g = geometry(input, weights, params)?;
    if bias.shape() != [g.cout] {
        return shape_err(format!(
            "bias has shape {:?}, expected [{}]",
            bias.shape(),
            g.cout
        ));
    }
    let (patch, pos) = (g.patch(), g.positions());
    let in_len = g.cin * g.h * g.w;
    let x = input.data();
    let wt = weights.data();
    let b = bias.data();
    let samples = per_sample(g.n, |s| {
        let mut col = vec![0.0; patch * pos];
        im2col(&x[s * in_len..(s + 1) * in_len], &g, &mut col);
        let mut out = vec![0.0; g.cout * pos];
        for (co, chunk) in out.chunks_mut(pos).enumerate() {
            chunk.fill(b[co]);
        }
        gemm(g.cout, patch, pos, wt, false, &col, false, 1.0, &mut out);
        out
    });
    Tensor::new(&[g.n, g.cout, g.ho, g.wo], samples.concat())
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    /// `None` when the caller asked to skip the input gradient.
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    conv2d_backward_opt(input, weights, params, grad_out, true)
}

/// Backward pass; `want_input` controls whether the input gradient is formed.
pub fn conv2d_backward_opt(
    input: &Tensor,
    weights: &Tensor,
    params: &ConvParams,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<ConvGrads> {
    let g = geometry(input, weights, params)?;
    let expected = [g.n, g.cout, g.ho, g.wo];
    if grad_out.shape() != expected {
        return shape_err(format!(
            "grad_out has shape {:?}, forward output is {expected:?}",
            grad_out.shape()
        ));
    }
    let (patch, pos) = (g.patch(), g.positions());
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * pos;
    let x = input.data();
    let wt = weights.data();
    let go = grad_out.data();

    let parts = per_sample(g.n, |s| {
        let gs = &go[s * out_len..(s + 1) * out_len];
        let mut col = vec![0.0; patch * pos];
        im2col(&x[s * in_len..(s + 1) * in_len], &g, &mut col);
        let mut gw = vec![0.0; g.cout * patch];
        gemm(g.cout, pos, patch, gs, false, &col, true, 0.0, &mut gw);
        let gb: Vec<f64> = gs.chunks(pos).map(|c| c.iter().sum()).collect();
        let gx = want_input.then(|| {
            let mut gcol = vec![0.0; patch * pos];
            gemm(patch, g.cout, pos, wt, true, gs, false, 0.0, &mut gcol);
            let mut gx = vec![0.0; in_len];
            col2im(&gcol, &g, &mut gx);
            gx
        });
        (gw, gb, gx)
    });

    let mut gw = vec![0.0; g.cout * patch];
    let mut gb = vec![0.0; g.cout];
    let mut gx = want_input.then(|| Vec::with_capacity(g.n * in_len));
    for (pw, pb, px) in parts {
        gw.iter_mut().zip(&pw).for_each(|(a, b)| *a += b);
        gb.iter_mut().zip(&pb).for_each(|(a, b)| *a += b);
        if let (Some(acc), Some(px)) = (gx.as_mut(), px) {
            acc.extend_from_slice(&px);
        }
    }
    Ok(ConvGrads {
        input: gx
            .map(|d| Tensor::new(input.shape(), d))
            .transpose()?,
        weights: Tensor::new(weights.shape(), gw)?,
        bias: Tensor::new(&[g.cout], gb)?,
    })
}
