use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct SoftmaxXent {
    /// Mean negative log-likelihood over the batch.
    pub loss: f64,
    pub probs: Tensor,
    /// `(p − onehot) / N`.
    pub grad_logits: Tensor,
}

/// Row-wise softmax (max-subtracted) without a loss.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let [_, k] = logits.dims2("logits")?;
    let mut p = logits.data().to_vec();
    for row in p.chunks_mut(k) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Tensor::new(logits.shape(), p)
}

pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxXent> {
    let [n, k] = logits.dims2("logits")?;
    if labels.len() != n {
        return shape_err(format!("{} labels for a batch of {n}", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return arg_err(format!("label {bad} outside [0, {k})"));
    }
    let probs = softmax(logits)?;
    let x = logits.data();
    let mut loss = 0.0;
    for (r, &l) in labels.iter().enumerate() {
        let row = &x[r * k..(r + 1) * k];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[l];
    }
    let mut grad = probs.data().to_vec();
    for (r, &l) in labels.iter().enumerate() {
        grad[r * k + l] -= 1.0;
    }
    grad.iter_mut().for_each(|g| *g /= n as f64);
    Ok(SoftmaxXent {
        loss: loss / n as f64,
        probs,
        grad_logits: Tensor::new(&[n, k], grad)?,
    })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
