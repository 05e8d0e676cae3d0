use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{DatasetRun, DetectRun, EvalRun, GradcheckRun, RunSpec, SweepRun, SynthRun, TrainRun};
use rebarscan::detect::{
    apex_errors, classify_windows, compare_elements, corpus_scenes, localize_rebar, sweep_window_sizes,
    write_comparison_csv, write_detections_csv, write_sweep_csv, Corpus, MatchStats,
};
use rebarscan::gpr::{read_manifest, render_bscan, write_manifest, write_pgm, ElementKind, ImageManifest};
use rebarscan::net::{load_checkpoint, save_checkpoint};
use rebarscan::train::{evaluate, split_dataset, train, write_history_csv, TrainConfig};
use rebarscan::window::{
    balance_classes, build_dataset, flip_augment, load_dataset, load_images, save_dataset, DatasetMeta,
    LabeledImage, WindowConfig, WindowLabel,
};
use rebarscan::{gradcheck, ops, rng, Error};

const MANIFEST_FILE: &str = "run_manifest.json";

/// Everything needed to repeat a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub run: RunSpec,
}

#[derive(Debug)]
pub struct GradcheckFailed(pub Vec<String>);

impl std::fmt::Display for GradcheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "gradient check failed for {}", self.0.join(", "))
    }
}

impl std::error::Error for GradcheckFailed {}

pub fn read_run_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_run_manifest(run: &RunSpec) -> Result<()> {
    let out = run.out_dir();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        run: run.clone(),
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Writes the run manifest, then runs.
pub fn execute(run: &RunSpec) -> Result<()> {
    write_run_manifest(run)?;
    match run {
        RunSpec::Synth(r) => synth(r),
        RunSpec::Dataset(r) => dataset(r),
        RunSpec::Train(r) => train_cmd(r),
        RunSpec::Eval(r) => eval(r),
        RunSpec::Sweep(r) => sweep(r),
        RunSpec::Detect(r) => detect(r),
        RunSpec::Gradcheck(r) => gradcheck_cmd(r),
    }
}

/// Image manifests in `dir`, sorted by file name.
fn manifest_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != MANIFEST_FILE)
    });
    paths.sort();
    Ok(paths)
}

fn synth(r: &SynthRun) -> Result<()> {
    let mut written = 0;
    for &kind in &r.elements {
        for (id, mut scene) in corpus_scenes(Corpus::from(kind), r.count, r.seed) {
            scene.noise_sigma = r.noise;
            let scan = render_bscan(&scene)?;
            let image_file = format!("{id}.pgm");
            write_pgm(&r.out.join(&image_file), scan.n_traces, scan.n_samples, &scan.pixels)?;
            let manifest = ImageManifest {
                image_id: id.clone(),
                image_file,
                width: scan.n_traces,
                height: scan.n_samples,
                apexes: scan.ground_truth.clone(),
                scene,
            };
            write_manifest(&r.out.join(format!("{id}.json")), &manifest)?;
            written += 1;
        }
    }
    println!("wrote {written} image(s) to {}", r.out.display());
    Ok(())
}

fn print_histogram(counts: &[usize]) {
    for (name, n) in WindowLabel::NAMES.iter().zip(counts) {
        println!("{name:>6}  {n}");
    }
    println!("{:>6}  {}", "total", counts.iter().sum::<usize>());
}

fn dataset(r: &DatasetRun) -> Result<()> {
    let window = r.windows.window;
    if !window.is_preset() && !r.allow_custom_window {
        return Err(Error::InvalidArgument(format!(
            "window {window} is not a preset (120x30, 150x50, 200x80, 250x100); pass --allow-custom-window"
        ))
        .into());
    }
    ops::set_deterministic(r.deterministic);
    let manifests = manifest_paths(&r.images)?;
    let images = load_images(&manifests)?;
    let ds = build_dataset(&images, &r.windows)?;
    let sources = manifests.iter().map(|p| p.display().to_string()).collect();
    save_dataset(&r.out, &ds, &DatasetMeta::new(&r.windows, &ds, sources))?;
    println!("{} windows of {window} from {} image(s)", ds.len(), images.len());
    print_histogram(&ds.class_counts());
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    network: &'a str,
    best_epoch: usize,
    epochs_run: usize,
    train_windows: usize,
    test_windows: usize,
    metrics: &'a rebarscan::train::Metrics,
}

fn train_cmd(r: &TrainRun) -> Result<()> {
    let (all, meta) = load_dataset(&r.dataset)?;
    if let Some(input) = r.input {
        if input != meta.config.input {
            return Err(Error::Shape(format!(
                "requested input {}x{} but the dataset holds {}x{} windows",
                input.1, input.0, meta.config.input.1, meta.config.input.0
            ))
            .into());
        }
    }
    let spec = r.net.build(all.input_shape(), all.num_classes())?;
    let seed = r.sgd.seed;
    let pool = if r.balance {
        balance_classes(&all, r.max_per_class, rng::derive_seed(seed, "balance"))?
    } else {
        all
    };
    let (mut train_set, test) = split_dataset(&pool, r.train_fraction, rng::derive_seed(seed, "split"))?;
    if r.augment {
        train_set = flip_augment(&train_set)?;
    }
    let sgd = TrainConfig {
        learning_rate: r.learning_rate.unwrap_or(r.net.default_learning_rate()),
        ..r.sgd.clone()
    };
    let report = train(&spec, &train_set, &test, &sgd)?;
    save_checkpoint(&report.network, &r.out.join("model.rbsc"))?;
    write_history_csv(
        BufWriter::new(File::create(r.out.join("history.csv"))?),
        &report.history,
        &report.test_metrics.confusion,
        &WindowLabel::NAMES,
    )?;
    let summary = TrainSummary {
        network: &spec.name,
        best_epoch: report.best_epoch,
        epochs_run: report.epochs_run,
        train_windows: train_set.len(),
        test_windows: test.len(),
        metrics: &report.test_metrics,
    };
    fs::write(r.out.join("report.json"), serde_json::to_vec_pretty(&summary)?)?;
    println!(
        "{}: test accuracy {:.4} at epoch {} of {} ({} train / {} test windows)",
        spec.name,
        report.test_metrics.accuracy,
        report.best_epoch,
        report.epochs_run,
        train_set.len(),
        test.len()
    );
    Ok(())
}

fn eval(r: &EvalRun) -> Result<()> {
    ops::set_deterministic(r.deterministic);
    let net = load_checkpoint(&r.checkpoint)?;
    let (ds, _) = load_dataset(&r.dataset)?;
    if net.spec().input_shape != ds.input_shape() || net.spec().num_classes != ds.num_classes() {
        return Err(Error::Shape(format!(
            "checkpoint `{}` expects {:?} over {} classes; dataset holds {:?} over {}",
            net.spec().name,
            net.spec().input_shape,
            net.spec().num_classes,
            ds.input_shape(),
            ds.num_classes()
        ))
        .into());
    }
    let metrics = evaluate(&net, &ds)?;
    fs::write(r.out.join("metrics.json"), serde_json::to_vec_pretty(&metrics)?)?;
    write_history_csv(
        BufWriter::new(File::create(r.out.join("confusion.csv"))?),
        &[],
        &metrics.confusion,
        &WindowLabel::NAMES,
    )?;
    println!("accuracy {:.4} over {} windows", metrics.accuracy, ds.len());
    for (i, name) in WindowLabel::NAMES.iter().enumerate() {
        println!("{name:>6}  precision {:.4}  recall {:.4}", metrics.precision[i], metrics.recall[i]);
    }
    Ok(())
}

/// Loads manifests with their element kinds.
fn load_corpus_dir(dir: &Path) -> Result<Vec<(ElementKind, LabeledImage)>> {
    let paths = manifest_paths(dir)?;
    let kinds = paths
        .iter()
        .map(|p| Ok(read_manifest(p)?.scene.element))
        .collect::<rebarscan::Result<Vec<_>>>()?;
    Ok(kinds.into_iter().zip(load_images(&paths)?).collect())
}

fn sweep(r: &SweepRun) -> Result<()> {
    let tagged: Vec<(ElementKind, LabeledImage)> = match &r.images {
        Some(dir) => load_corpus_dir(dir)?,
        None => r
            .corpus
            .elements()
            .into_iter()
            .map(|kind| {
                let images = rebarscan::detect::synth_corpus(Corpus::from(kind), r.count, r.corpus_seed)?;
                Ok(images.into_iter().map(move |img| (kind, img)))
            })
            .collect::<rebarscan::Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect(),
    };
    let corpus_name = match &r.images {
        Some(_) => "custom".to_string(),
        None => r.corpus.name().to_string(),
    };
    let all: Vec<LabeledImage> = tagged.iter().map(|(_, img)| img.clone()).collect();
    let rows = sweep_window_sizes(&r.nets, &[(corpus_name, all)], &r.windows, &r.seeds, &r.experiment);
    write_sweep_csv(BufWriter::new(File::create(r.out.join("sweep.csv"))?), &rows)?;
    for row in &rows {
        let acc = row.test_accuracy.map_or("-".to_string(), |a| format!("{:.4}", a));
        println!(
            "{:<11} {:>3}x{:<3} {:<7} seed {:<4} {acc:>7}  {}",
            row.network, row.window_w, row.window_h, row.corpus, row.seed, row.status
        );
    }
    if r.by_element {
        let elements: Vec<(String, Vec<LabeledImage>)> = ElementKind::ALL
            .iter()
            .map(|&k| {
                let imgs = tagged.iter().filter(|(e, _)| *e == k).map(|(_, img)| img.clone()).collect();
                (k.name().to_string(), imgs)
            })
            .filter(|(_, imgs): &(String, Vec<LabeledImage>)| !imgs.is_empty())
            .collect();
        let (table, cells) = compare_elements(&r.nets, &elements, &r.windows, &r.seeds, &r.experiment);
        write_sweep_csv(BufWriter::new(File::create(r.out.join("elements_sweep.csv"))?), &cells)?;
        write_comparison_csv(BufWriter::new(File::create(r.out.join("elements.csv"))?), &table)?;
        for row in &table {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.4}"));
            println!(
                "{:<11} {} {:<7} mean {} ± {}",
                row.network,
                row.window,
                row.element,
                fmt(row.mean),
                fmt(row.std)
            );
        }
    }
    println!("{}", rebarscan::detect::REFERENCE_NOTE);
    Ok(())
}

#[derive(Serialize)]
struct DetectSummary {
    images: usize,
    detections: usize,
    tolerance_px: f64,
    precision: f64,
    recall: f64,
    mean_apex_error_px: f64,
}

fn detect(r: &DetectRun) -> Result<()> {
    ops::set_deterministic(r.deterministic);
    let net = load_checkpoint(&r.checkpoint)?;
    let [channels, h, w] = net.spec().input_shape;
    let mut cfg = WindowConfig::new(r.window, (h, w));
    cfg.channels = channels;
    if let Some(stride) = r.stride {
        cfg.stride = stride;
    }
    let paths = manifest_paths(&r.images)?;
    let images = load_images(&paths)?;
    let tolerance = r.window.w as f64 / 2.0;
    let mut all = Vec::new();
    let mut stats = MatchStats { true_positives: 0, false_positives: 0, false_negatives: 0 };
    let mut errors = Vec::new();
    let mut maps = Vec::new();
    for img in &images {
        let map = classify_windows(&net, img, &cfg)?;
        let found = localize_rebar(&map);
        let xs: Vec<f64> = found.iter().map(|d| d.x_px).collect();
        let truth: Vec<f64> = img.curves.iter().map(|c| c.apex.trace as f64 + 0.5).collect();
        stats = stats.merge(MatchStats::compute(&xs, &truth, tolerance));
        errors.extend(apex_errors(&xs, &truth));
        all.extend(found);
        maps.push(map);
    }
    write_detections_csv(BufWriter::new(File::create(r.out.join("detections.csv"))?), &all)?;
    fs::write(r.out.join("label_maps.json"), serde_json::to_vec(&maps)?)?;
    let mean_error = if errors.is_empty() { 0.0 } else { errors.iter().sum::<f64>() / errors.len() as f64 };
    let summary = DetectSummary {
        images: images.len(),
        detections: all.len(),
        tolerance_px: tolerance,
        precision: stats.precision(),
        recall: stats.recall(),
        mean_apex_error_px: mean_error,
    };
    fs::write(r.out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    println!(
        "{} detection(s) in {} image(s); precision {:.3}, recall {:.3} at ±{tolerance} px; mean apex error {mean_error:.1} px",
        all.len(),
        images.len(),
        summary.precision,
        summary.recall
    );
    Ok(())
}

fn gradcheck_cmd(r: &GradcheckRun) -> Result<()> {
    let reports = gradcheck::run_suite(r.configs, r.seed)?;
    let mut out = csv::Writer::from_path(r.out.join("gradcheck.csv"))?;
    out.write_record(["layer", "configs", "checked", "max_rel_error", "passed"])?;
    let mut failed = Vec::new();
    for rep in &reports {
        let verdict = if rep.passed() { "pass" } else { "FAIL" };
        println!("{:<12} {:>3} configs {:>7} partials  max rel error {:.3e}  {verdict}", rep.name, rep.configs, rep.checked, rep.max_rel_error);
        out.write_record([
            rep.name.clone(),
            rep.configs.to_string(),
            rep.checked.to_string(),
            format!("{:.6e}", rep.max_rel_error),
            rep.passed().to_string(),
        ])?;
        if !rep.passed() {
            failed.push(rep.name.clone());
        }
    }
    out.flush()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(GradcheckFailed(failed).into())
    }
}
