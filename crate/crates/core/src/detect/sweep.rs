use std::io::Write;

use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, ExperimentConfig, NetKind};
use crate::error::{Error, Result};
use crate::window::{LabeledImage, WindowSize};

/// Report footer placing the synthetic numbers next to the published one.
pub const REFERENCE_NOTE: &str =
    "# reference (annotation only): AlexNet at 200x80 reached 94.51% test accuracy on real scans";

/// One cell of a sweep. Failed cells keep their coordinates and leave the
/// accuracy and epoch count empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub network: String,
    pub window_w: usize,
    pub window_h: usize,
    pub corpus: String,
    pub seed: u64,
    pub test_accuracy: Option<f64>,
    pub epochs_run: Option<usize>,
    /// Zero in deterministic mode so reruns compare byte-for-byte.
    pub wall_secs: f64,
    /// `ok`, `diverged`, `starved` or `error`.
    pub status: String,
}

fn status_of(err: &Error) -> &'static str {
    match err {
        Error::Divergence { .. } => "diverged",
        Error::ClassStarvation(_) => "starved",
        _ => "error",
    }
}

/// Trains and evaluates every (network, window, corpus, seed) combination in
/// that nesting order. Each network uses its default input size. A failing
/// cell is recorded and the sweep moves on.
pub fn sweep_window_sizes(
    nets: &[NetKind],
    corpora: &[(String, Vec<LabeledImage>)],
    windows: &[WindowSize],
    seeds: &[u64],
    base: &ExperimentConfig,
) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(nets.len() * windows.len() * corpora.len() * seeds.len());
    for &net in nets {
        for &window in windows {
            for (name, images) in corpora {
                for &seed in seeds {
                    let cfg = ExperimentConfig { net, window, input: None, ..base.clone() };
                    let outcome = run_experiment(images, name, &cfg, seed);
                    let timing = |secs: f64| if base.train.deterministic { 0.0 } else { secs };
                    rows.push(match outcome {
                        Ok((run, _)) => SweepRow {
                            network: net.name().into(),
                            window_w: window.w,
                            window_h: window.h,
                            corpus: name.clone(),
                            seed,
                            test_accuracy: Some(run.metrics.accuracy),
                            epochs_run: Some(run.epochs_run),
                            wall_secs: timing(run.wall_secs),
                            status: "ok".into(),
                        },
                        Err(e) => SweepRow {
                            network: net.name().into(),
                            window_w: window.w,
                            window_h: window.h,
                            corpus: name.clone(),
                            seed,
                            test_accuracy: None,
                            epochs_run: None,
                            wall_secs: 0.0,
                            status: status_of(&e).into(),
                        },
                    });
                }
            }
        }
    }
    rows
}

pub fn write_sweep_csv(out: impl Write, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "network", "window_w", "window_h", "corpus", "seed", "test_accuracy", "epochs_run", "wall_secs", "status",
    ])?;
    for r in rows {
        w.write_record([
            r.network.clone(),
            r.window_w.to_string(),
            r.window_h.to_string(),
            r.corpus.clone(),
            r.seed.to_string(),
            r.test_accuracy.map_or(String::new(), |a| format!("{a:.6}")),
            r.epochs_run.map_or(String::new(), |e| e.to_string()),
            format!("{:.3}", r.wall_secs),
            r.status.clone(),
        ])?;
    }
    let mut out = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    writeln!(out, "{REFERENCE_NOTE}")?;
    Ok(())
}

/// Accuracy of one network and window on one element corpus across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRow {
    pub network: String,
    pub window: WindowSize,
    pub element: String,
    /// Over successful seeds; `None` when every seed failed.
    pub mean: Option<f64>,
    /// Sample standard deviation; 0 for a single seed.
    pub std: Option<f64>,
    pub per_seed: Vec<(u64, Option<f64>)>,
}

/// Runs the sweep over per-element corpora and aggregates each
/// (network, window, element) group.
pub fn compare_elements(
    nets: &[NetKind],
    elements: &[(String, Vec<LabeledImage>)],
    windows: &[WindowSize],
    seeds: &[u64],
    base: &ExperimentConfig,
) -> (Vec<ElementRow>, Vec<SweepRow>) {
    let rows = sweep_window_sizes(nets, elements, windows, seeds, base);
    let table = rows
        .chunks(seeds.len().max(1))
        .filter(|group| !group.is_empty())
        .map(|group| {
            let first = &group[0];
            let accs: Vec<f64> = group.iter().filter_map(|r| r.test_accuracy).collect();
            let (mean, std) = mean_std(&accs).map_or((None, None), |(m, s)| (Some(m), Some(s)));
            ElementRow {
                network: first.network.clone(),
                window: WindowSize::new(first.window_w, first.window_h),
                element: first.corpus.clone(),
                mean,
                std,
                per_seed: group.iter().map(|r| (r.seed, r.test_accuracy)).collect(),
            }
        })
        .collect();
    (table, rows)
}

fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 { 0.0 } else { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) };
    Some((mean, var.sqrt()))
}

/// `network,window_w,window_h,element,mean_accuracy,std_accuracy,per_seed`
/// with `per_seed` as `seed:accuracy` pairs joined by `;`.
pub fn write_comparison_csv(out: impl Write, rows: &[ElementRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["network", "window_w", "window_h", "element", "mean_accuracy", "std_accuracy", "per_seed"])?;
    let fmt = |v: Option<f64>| v.map_or(String::new(), |a| format!("{a:.6}"));
    for r in rows {
        let per_seed: Vec<String> = r.per_seed.iter().map(|(s, a)| format!("{s}:{}", fmt(*a))).collect();
        w.write_record([
            r.network.clone(),
            r.window.w.to_string(),
            r.window.h.to_string(),
            r.element.clone(),
            fmt(r.mean),
            fmt(r.std),
            per_seed.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_cells_keep_schema() {
        let rows = vec![
            SweepRow {
                network: "tranet".into(),
                window_w: 200,
                window_h: 80,
                corpus: "mixed".into(),
                seed: 1,
                test_accuracy: Some(0.9),
                epochs_run: Some(3),
                wall_secs: 0.0,
                status: "ok".into(),
            },
            SweepRow {
                network: "tranet".into(),
                window_w: 250,
                window_h: 100,
                corpus: "slab".into(),
                seed: 1,
                test_accuracy: None,
                epochs_run: None,
                wall_secs: 0.0,
                status: "starved".into(),
            },
        ];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "tranet,200,80,mixed,1,0.900000,3,0.000,ok");
        assert_eq!(lines[2], "tranet,250,100,slab,1,,,0.000,starved");
        assert!(lines.iter().take(3).all(|l| l.split(',').count() == 9));
        assert_eq!(lines[3], REFERENCE_NOTE);
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[0.8, 0.9, 1.0]).unwrap();
        assert!((m - 0.9).abs() < 1e-12 && (s - 0.1).abs() < 1e-12);
        assert_eq!(mean_std(&[0.5]), Some((0.5, 0.0)));
        assert_eq!(mean_std(&[]), None);
    }
}
