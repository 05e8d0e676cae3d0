//! Mini-batch momentum SGD, stratified splitting and evaluation.

pub mod config;
pub mod metrics;
pub mod sgd;
pub mod split;

use rand::seq::SliceRandom;

pub use config::{LrDecay, TrainConfig};
pub use metrics::{evaluate, predict_dataset, write_history_csv, EpochRecord, Metrics};
pub use sgd::sgd_step;
pub use split::{split_dataset, stratified_counts};

use crate::data::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::net::{Network, NetworkSpec};
use crate::ops::{self, softmax_xent, Mode};
use crate::rng;

/// Result of [`train`]: the best-test-accuracy snapshot and the full history.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub network: Network,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Test-set metrics of the returned snapshot.
    pub test_metrics: Metrics,
}

impl TrainReport {
    pub fn loss_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.train_loss).collect()
    }
}

/// Restores the process-wide kernel mode when dropped.
struct DeterministicGuard(bool);

impl DeterministicGuard {
    fn set(on: bool) -> Self {
        let prev = ops::deterministic();
        if on {
            ops::set_deterministic(true);
        }
        Self(prev)
    }
}

impl Drop for DeterministicGuard {
    fn drop(&mut self) {
        ops::set_deterministic(self.0);
    }
}

/// Trains a fresh network from `spec` for `max_epochs` epochs, evaluating on
/// `test` after each. Returns the earliest epoch with the highest test
/// accuracy. A non-finite batch loss aborts with [`Error::Divergence`].
pub fn train(spec: &NetworkSpec, train_set: &Dataset, test: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let _guard = DeterministicGuard::set(config.deterministic);
    if train_set.is_empty() || test.is_empty() {
        return arg_err("training and test sets must be non-empty");
    }
    for (what, ds) in [("training", train_set), ("test", test)] {
        if ds.input_shape() != spec.input_shape || ds.num_classes() != spec.num_classes {
            return Err(Error::Shape(format!(
                "{what} set holds {:?} samples over {} classes; `{}` expects {:?} over {}",
                ds.input_shape(),
                ds.num_classes(),
                spec.name,
                spec.input_shape,
                spec.num_classes
            )));
        }
    }
    let mut net = Network::init(spec, rng::derive_seed(config.seed, "init"))?;
    let mut velocity = net.zero_grads();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(f64, usize, Network, Metrics)> = None;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng::stream_at(config.seed, "shuffle", epoch as u64));
        let lr = config.lr_at(epoch);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, labels) = train_set.batch(chunk)?;
            let step_seed = rng::derive_seed_at(config.seed, "dropout", (epoch as u64) << 32 | b as u64);
            let (logits, cache) = net.forward(&x, Mode::Train, step_seed)?;
            let out = softmax_xent(&logits, &labels)?;
            if !out.loss.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1, loss: out.loss });
            }
            loss_sum += out.loss * chunk.len() as f64;
            let grads = net.backward(&cache, &out.grad_logits)?;
            sgd_step(&mut net, &grads, &mut velocity, lr, config.momentum, config.weight_decay)?;
        }
        let metrics = evaluate(&net, test)?;
        history.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            test_acc: metrics.accuracy,
        });
        if best.as_ref().is_none_or(|(acc, ..)| metrics.accuracy > *acc) {
            best = Some((metrics.accuracy, epoch + 1, net.clone(), metrics));
        }
    }
    let (_, best_epoch, network, test_metrics) = best.expect("at least one epoch ran");
    Ok(TrainReport {
        network,
        epochs_run: history.len(),
        history,
        best_epoch,
        test_metrics,
    })
}
