use super::gemm;
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// `output = input · weights + bias` for `input: [N, D]`, `weights: [D, M]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [n, d] = input.dims2("dense input")?;
    let [wd, m] = weights.dims2("dense weights")?;
    if wd != d {
        return shape_err(format!(
            "dense input width {d} does not match weight rows {wd}"
        ));
    }
    if bias.shape() != [m] {
        return shape_err(format!("dense bias has shape {:?}, expected [{m}]", bias.shape()));
    }
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    gemm(n, d, m, input.data(), false, weights.data(), false, 1.0, &mut out);
    Tensor::new(&[n, m], out)
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    let [n, d] = input.dims2("dense input")?;
    let [wd, m] = weights.dims2("dense weights")?;
    if wd != d {
        return shape_err(format!(
            "dense input width {d} does not match weight rows {wd}"
        ));
    }
    if grad_out.shape() != [n, m] {
        return shape_err(format!(
            "dense grad_out has shape {:?}, expected [{n}, {m}]",
            grad_out.shape()
        ));
    }
    let g = grad_out.data();
    let mut gw = vec![0.0; d * m];
    gemm(d, n, m, input.data(), true, g, false, 0.0, &mut gw);
    let mut gx = vec![0.0; n * d];
    gemm(n, m, d, g, false, weights.data(), true, 0.0, &mut gx);
    let mut gb = vec![0.0; m];
    for row in g.chunks(m) {
        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    Ok(DenseGrads {
        input: Tensor::new(&[n, d], gx)?,
        weights: Tensor::new(&[d, m], gw)?,
        bias: Tensor::new(&[m], gb)?,
    })
}

/// `[N, C, H, W] → [N, C·H·W]`, channel-major (C, H, W row-major).
pub fn flatten(input: &Tensor) -> Result<Tensor> {
    let n = input.shape()[0];
    let rest = input.len() / n;
    input.clone().reshape(&[n, rest])
}

pub fn unflatten(input: &Tensor, chw: [usize; 3]) -> Result<Tensor> {
    let [n, d] = input.dims2("flattened input")?;
    if d != chw.iter().product::<usize>() {
        return shape_err(format!("cannot unflatten width {d} into {chw:?}"));
    }
    input.clone().reshape(&[n, chw[0], chw[1], chw[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::from_fn(&[3, 4], |i| i as f64 * 0.5);
        let w = Tensor::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
        assert_eq!(dense_forward(&x, &w, &Tensor::zeros(&[4])).unwrap(), x);
    }

    #[test]
    fn inner_dimension_mismatch() {
        let x = Tensor::zeros(&[2, 3]);
        let w = Tensor::zeros(&[4, 2]);
        assert!(dense_forward(&x, &w, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let t = Tensor::from_fn(&[2, 3, 4, 5], |i| i as f64);
        let f = flatten(&t).unwrap();
        assert_eq!(f.shape(), &[2, 60]);
        // channel-major: element (n=1, c=2, h=3, w=4) lands at column 2·20 + 3·5 + 4
        assert_eq!(f.get(&[1, 59]), t.get(&[1, 2, 3, 4]));
        assert_eq!(unflatten(&f, [3, 4, 5]).unwrap(), t);
    }
}
