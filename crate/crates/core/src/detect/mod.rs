//! Whole-scan classification, rebar localisation and the comparative
//! experiments.

pub mod experiment;
pub mod sweep;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use experiment::{
    corpus_scenes, run_experiment, synth_corpus, Corpus, ExperimentConfig, NetKind, RunReport, ALEXNET_S8_SCALE,
};
pub use sweep::{
    compare_elements, sweep_window_sizes, write_comparison_csv, write_sweep_csv, ElementRow, SweepRow,
    REFERENCE_NOTE,
};

use crate::data::Rect;
use crate::error::{shape_err, Result};
use crate::net::Network;
use crate::ops::softmax;
use crate::tensor::Tensor;
use crate::window::{auto_label, split_image, window_pixels, LabeledImage, WindowConfig, WindowLabel, WindowSize};

const CLASSIFY_BATCH: usize = 64;
/// Confidence added per flanking limb window.
pub const FLANK_BONUS: f64 = 0.1;
/// Flank search distance from a detection, in window widths.
pub const FLANK_REACH: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub rect: Rect,
    pub label: WindowLabel,
    /// Class probabilities in [`WindowLabel::ALL`] order.
    pub probs: Vec<f64>,
}

/// Per-window predictions over one image, in `split_image` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub image_id: String,
    pub width: usize,
    pub window: WindowSize,
    pub stride: (usize, usize),
    pub entries: Vec<MapEntry>,
}

/// Infer-mode classification of every window of `image`.
pub fn classify_windows(net: &Network, image: &LabeledImage, cfg: &WindowConfig) -> Result<LabelMap> {
    let shape = cfg.input_shape();
    if net.spec().input_shape != shape {
        return shape_err(format!(
            "network `{}` expects {:?} inputs, windows resize to {:?}",
            net.spec().name,
            net.spec().input_shape,
            shape
        ));
    }
    let rects = split_image(image.width, image.height, cfg.window, cfg.stride)?;
    let per: usize = shape.iter().product();
    let mut entries = Vec::with_capacity(rects.len());
    for chunk in rects.chunks(CLASSIFY_BATCH) {
        let mut data = Vec::with_capacity(chunk.len() * per);
        for r in chunk {
            data.extend(window_pixels(&image.pixels, image.width, r, cfg.input, cfg.channels, cfg.antialias)?);
        }
        let x = Tensor::new(&[chunk.len(), shape[0], shape[1], shape[2]], data)?;
        let probs = softmax(&net.predict(&x)?)?;
        let k = probs.shape()[1];
        for (r, p) in chunk.iter().zip(probs.data().chunks(k)) {
            let label = WindowLabel::from_index(crate::ops::argmax(p)).unwrap_or(WindowLabel::Other);
            entries.push(MapEntry { rect: *r, label, probs: p.to_vec() });
        }
    }
    Ok(LabelMap {
        image_id: image.id.clone(),
        width: image.width,
        window: cfg.window,
        stride: cfg.stride,
        entries,
    })
}

/// Ground-truth map: geometric labels with one-hot probabilities.
pub fn oracle_map(image: &LabeledImage, cfg: &WindowConfig) -> Result<LabelMap> {
    let entries = split_image(image.width, image.height, cfg.window, cfg.stride)?
        .into_iter()
        .map(|rect| {
            let label = auto_label(&rect, &image.curves, &cfg.geometry);
            let mut probs = vec![0.0; WindowLabel::ALL.len()];
            probs[label.index()] = 1.0;
            MapEntry { rect, label, probs }
        })
        .collect();
    Ok(LabelMap {
        image_id: image.id.clone(),
        width: image.width,
        window: cfg.window,
        stride: cfg.stride,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    /// Estimated apex column.
    pub x_px: f64,
    pub confidence: f64,
    pub flanked_left: bool,
    pub flanked_right: bool,
}

/// Groups Peak windows whose x positions lie within one stride of each
/// other; each group yields the Peak-probability-weighted mean of its window
/// centres. Confidence is the mean Peak probability plus [`FLANK_BONUS`] for
/// a Left window centred up to [`FLANK_REACH`] widths left of the position
/// and for a Right window as far to the right, capped at 1.
pub fn localize_rebar(map: &LabelMap) -> Vec<Detection> {
    let peak = WindowLabel::Peak.index();
    let mut peaks: Vec<&MapEntry> = map.entries.iter().filter(|e| e.label == WindowLabel::Peak).collect();
    peaks.sort_by_key(|e| (e.rect.x, e.rect.y));
    let mut clusters: Vec<Vec<&MapEntry>> = Vec::new();
    for e in peaks {
        match clusters.last_mut() {
            Some(c) if e.rect.x - c.last().expect("non-empty").rect.x <= map.stride.0 => c.push(e),
            _ => clusters.push(vec![e]),
        }
    }
    let reach = FLANK_REACH * map.window.w as f64;
    clusters
        .into_iter()
        .map(|c| {
            let mass: f64 = c.iter().map(|e| e.probs[peak]).sum();
            let x_px = c.iter().map(|e| e.probs[peak] * e.rect.center_x()).sum::<f64>() / mass;
            let flank = |label: WindowLabel, range: &dyn Fn(f64) -> bool| {
                map.entries.iter().any(|e| e.label == label && range(e.rect.center_x()))
            };
            let flanked_left = flank(WindowLabel::Left, &|cx| cx >= x_px - reach && cx < x_px);
            let flanked_right = flank(WindowLabel::Right, &|cx| cx > x_px && cx <= x_px + reach);
            let bonus = FLANK_BONUS * (flanked_left as u8 + flanked_right as u8) as f64;
            Detection {
                image_id: map.image_id.clone(),
                x_px,
                confidence: (mass / c.len() as f64 + bonus).min(1.0),
                flanked_left,
                flanked_right,
            }
        })
        .collect()
}

/// One-to-one matching of detections against true apex columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl MatchStats {
    /// Greedy closest-pair matching within `tolerance` pixels.
    pub fn compute(detections: &[f64], truth: &[f64], tolerance: f64) -> Self {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, d) in detections.iter().enumerate() {
            for (j, t) in truth.iter().enumerate() {
                let dist = (d - t).abs();
                if dist <= tolerance {
                    pairs.push((dist, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used_d = vec![false; detections.len()];
        let mut used_t = vec![false; truth.len()];
        let mut tp = 0;
        for (_, i, j) in pairs {
            if !used_d[i] && !used_t[j] {
                used_d[i] = true;
                used_t[j] = true;
                tp += 1;
            }
        }
        Self {
            true_positives: tp,
            false_positives: detections.len() - tp,
            false_negatives: truth.len() - tp,
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            true_positives: self.true_positives + other.true_positives,
            false_positives: self.false_positives + other.false_positives,
            false_negatives: self.false_negatives + other.false_negatives,
        }
    }

    /// 1 when nothing was detected.
    pub fn precision(&self) -> f64 {
        let n = self.true_positives + self.false_positives;
        if n == 0 { 1.0 } else { self.true_positives as f64 / n as f64 }
    }

    /// 1 when there was nothing to find.
    pub fn recall(&self) -> f64 {
        let n = self.true_positives + self.false_negatives;
        if n == 0 { 1.0 } else { self.true_positives as f64 / n as f64 }
    }
}

/// Distance from each true apex column to its nearest detection; infinite
/// when there are no detections.
pub fn apex_errors(detections: &[f64], truth: &[f64]) -> Vec<f64> {
    truth
        .iter()
        .map(|t| detections.iter().map(|d| (d - t).abs()).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `image_id,x_px,confidence,flanked_left,flanked_right`.
pub fn write_detections_csv(out: impl Write, detections: &[Detection]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image_id", "x_px", "confidence", "flanked_left", "flanked_right"])?;
    for d in detections {
        w.write_record([
            d.image_id.clone(),
            format!("{:.2}", d.x_px),
            format!("{:.4}", d.confidence),
            d.flanked_left.to_string(),
            d.flanked_right.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
