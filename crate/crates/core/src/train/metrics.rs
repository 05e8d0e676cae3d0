use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{arg_err, Result};
use crate::net::Network;
use crate::ops::argmax;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Per class; 0 when the class was never predicted.
    pub precision: Vec<f64>,
    /// Per class; 0 when the class has no samples.
    pub recall: Vec<f64>,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Metrics {
    pub fn from_predictions(labels: &[usize], predictions: &[usize], num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return arg_err("cannot compute metrics over zero samples");
        }
        if labels.len() != predictions.len() {
            return arg_err(format!("{} labels but {} predictions", labels.len(), predictions.len()));
        }
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        for (&l, &p) in labels.iter().zip(predictions) {
            if l >= num_classes || p >= num_classes {
                return arg_err(format!("class index outside [0, {num_classes})"));
            }
            confusion[l][p] += 1;
        }
        let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = (0..num_classes)
            .map(|c| ratio(confusion[c][c], (0..num_classes).map(|r| confusion[r][c]).sum()))
            .collect();
        let recall = (0..num_classes)
            .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
            .collect();
        Ok(Self {
            accuracy: correct as f64 / labels.len() as f64,
            precision,
            recall,
            confusion,
            predictions: predictions.to_vec(),
            labels: labels.to_vec(),
        })
    }
}

/// Inference-mode predictions, ties to the lowest class index.
pub fn predict_dataset(net: &Network, dataset: &Dataset) -> Result<Vec<usize>> {
    let k = net.spec().num_classes;
    let mut out = Vec::with_capacity(dataset.len());
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = dataset.batch(chunk)?;
        let logits = net.predict(&x)?;
        out.extend(logits.data().chunks(k).map(argmax));
    }
    Ok(out)
}

pub fn evaluate(net: &Network, dataset: &Dataset) -> Result<Metrics> {
    if dataset.is_empty() {
        return arg_err("cannot evaluate on an empty dataset");
    }
    let predictions = predict_dataset(net, dataset)?;
    Metrics::from_predictions(&dataset.labels(), &predictions, net.spec().num_classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub test_acc: f64,
}

/// Epoch rows (`epoch,train_loss,test_acc`), a blank line, then the confusion
/// block headed `actual,<class names…>`.
pub fn write_history_csv(
    out: impl Write,
    history: &[EpochRecord],
    confusion: &[Vec<usize>],
    class_names: &[&str],
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["epoch", "train_loss", "test_acc"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), format!("{:.6}", r.train_loss), format!("{:.6}", r.test_acc)])?;
    }
    let mut out = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    out.write_all(b"\n")?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let mut header = vec!["actual".to_string()];
    header.extend(class_names.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (name, row) in class_names.iter().zip(confusion) {
        let mut rec = vec![name.to_string()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
