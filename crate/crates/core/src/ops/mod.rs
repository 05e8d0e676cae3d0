//! Differentiable layer primitives.
//!
//! Every layer is a pair of pure functions: a forward pass and a hand-written
//! backward pass. Batch-parallel kernels reduce per-sample partial results in
//! a fixed order, so results are bit-identical with and without threads;
//! [`set_deterministic`] additionally forces single-threaded execution.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod lrn;
pub mod oracle;
pub mod pool;
pub mod resize;
pub mod softmax;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormParams, RunningStats,
};
pub use conv::{conv2d_backward, conv2d_backward_opt, conv2d_forward, ConvGrads, ConvParams};
pub use dense::{dense_backward, dense_forward, flatten, unflatten, DenseGrads};
pub use dropout::{dropout, dropout_backward};
pub use lrn::{lrn_backward, lrn_forward, LrnParams};
pub use pool::{
    avgpool_backward, avgpool_forward, maxpool_backward, maxpool_forward, PoolIndices, PoolParams,
};
pub use resize::{resize_antialiased, resize_bilinear};
pub use softmax::{argmax, softmax, softmax_xent, SoftmaxXent};

static DETERMINISTIC: AtomicBool = AtomicBool::new(false);

/// Forces single-threaded kernels process-wide.
pub fn set_deterministic(on: bool) {
    DETERMINISTIC.store(on, Ordering::SeqCst);
}

pub fn deterministic() -> bool {
    DETERMINISTIC.load(Ordering::SeqCst)
}

/// Train or inference behaviour for dropout and batch normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Infer,
}

/// Runs `f` for each sample index, in parallel unless deterministic mode is on.
/// Output order always follows the sample index.
pub(crate) fn per_sample<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if deterministic() || n == 1 {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// `c = a·b + beta·c` for row-major `a: m×k`, `b: k×n`, `c: m×n`.
/// With `a_t` the slice holds `aᵀ` (k×m); with `b_t` it holds `bᵀ` (n×k).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths were checked above against the m×k, k×n and m×n
    // extents, and the strides address only elements inside those extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
