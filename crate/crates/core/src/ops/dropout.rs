use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mode;
use crate::error::{arg_err, Result};
use crate::tensor::Tensor;

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return arg_err(format!("dropout rate must lie in [0, 1), got {rate}"));
    }
    Ok(())
}

/// Inverted dropout. Returns the output and a 0/1 keep mask; survivors are
/// scaled by `1 / (1 − rate)` so inference is the identity.
pub fn dropout(input: &Tensor, rate: f64, seed: u64, mode: Mode) -> Result<(Tensor, Tensor)> {
    check_rate(rate)?;
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((input.clone(), Tensor::filled(input.shape(), 1.0)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = Tensor::from_fn(input.shape(), |_| {
        if rng.gen::<f64>() < rate {
            0.0
        } else {
            1.0
        }
    });
    let scale = 1.0 / (1.0 - rate);
    let out = input.zip_map(&mask, |x, m| x * m * scale)?;
    Ok((out, mask))
}

pub fn dropout_backward(mask: &Tensor, rate: f64, grad_out: &Tensor) -> Result<Tensor> {
    check_rate(rate)?;
    let scale = 1.0 / (1.0 - rate);
    mask.zip_map(grad_out, |m, g| g * m * scale)
}
