//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and fails
//! if any criterion does.

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rebarscan::data::{Dataset, Sample};
use rebarscan::detect::{
    apex_errors, classify_windows, compare_elements, localize_rebar, oracle_map, run_experiment, sweep_window_sizes,
    synth_corpus, write_sweep_csv, Corpus, ElementRow, ExperimentConfig, MatchStats, NetKind, SweepRow,
};
use rebarscan::gradcheck::{self, DEFAULT_CONFIGS};
use rebarscan::net::{build_alexnet, build_tranet, load_checkpoint, save_checkpoint, LayerKind, LayerSpec, Network, NetworkSpec};
use rebarscan::ops::{self, oracle, ConvParams, Mode};
use rebarscan::train::{evaluate, train, TrainConfig};
use rebarscan::window::{LabeledImage, WindowConfig, WindowSize};
use rebarscan::Tensor;

/// Images per element in the default synthetic corpus.
const PER_ELEMENT: usize = 16;
const CORPUS_SEED: u64 = 0;
/// Column images never seen in training.
const HELD_OUT_SEED: u64 = 1;
const HELD_OUT_IMAGES: usize = 8;
const SEEDS: [u64; 3] = [1, 2, 3];
/// Sixteen slab images balance down to a handful of windows per class.
const SLAB_IMAGES: usize = 64;
/// Shared budget for the slab comparison; the best snapshot is kept.
const DEPTH_EPOCHS: usize = 150;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn base_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.train.deterministic = true;
    cfg
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn spatial_trace(spec: &NetworkSpec) -> Vec<usize> {
    spec.shapes()
        .unwrap()
        .iter()
        .zip(&spec.layers)
        .filter(|(_, l)| matches!(l.kind(), LayerKind::Conv | LayerKind::MaxPool))
        .map(|(s, _)| s[1])
        .collect()
}

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let reports = gradcheck::run_suite(DEFAULT_CONFIGS, 11).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed() || r.checked == 0).map(|r| r.name.as_str()).collect();
    verdict(
        failed.is_empty() && reports.len() == LayerKind::ALL.len() + 1 && secs < 60.0,
        format!("{} checks, worst relative error {worst:.2e}, {secs:.1}s, failing {failed:?}", reports.len()),
    )
}

fn kernel_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let random = |shape: &[usize], rng: &mut ChaCha8Rng| Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0));
    let (mut done, mut worst) = (0, 0.0f64);
    while done < 50 {
        let p = ConvParams {
            out_channels: rng.gen_range(1..=8),
            kernel_h: rng.gen_range(1..=5),
            kernel_w: rng.gen_range(1..=5),
            stride: rng.gen_range(1..=3),
            padding: rng.gen_range(0..=2),
        };
        let (n, cin) = (rng.gen_range(1..=3), rng.gen_range(1..=4));
        let (h, w) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
        if h + 2 * p.padding < p.kernel_h || w + 2 * p.padding < p.kernel_w {
            continue;
        }
        let x = random(&[n, cin, h, w], &mut rng);
        let wt = random(&[p.out_channels, cin, p.kernel_h, p.kernel_w], &mut rng);
        let b = random(&[p.out_channels], &mut rng);
        let fast = ops::conv2d_forward(&x, &wt, &b, &p).unwrap();
        let slow = oracle::conv2d_naive(&x, &wt, &b, &p).unwrap();
        assert_eq!(fast.shape(), slow.shape());
        worst = worst.max(fast.max_abs_diff(&slow));
        done += 1;
    }
    verdict(worst <= 1e-12, format!("50 configurations, max elementwise difference {worst:.2e}"))
}

fn architecture_fidelity() -> Verdict {
    let tranet = build_tranet([1, 28, 28], 4).unwrap();
    let kinds: Vec<LayerKind> = tranet.layers.iter().map(LayerSpec::kind).collect();
    use LayerKind::*;
    let expected = [
        Conv, Relu, BatchNorm, MaxPool, Conv, Relu, BatchNorm, MaxPool, Conv, Relu, BatchNorm, Flatten, Dense,
        SoftmaxOutput,
    ];
    let conv_shapes = spatial_trace(&tranet);
    let params = tranet.param_count().unwrap();
    let tranet_ok = kinds == expected && conv_shapes == [26, 13, 11, 5, 3] && params == 7156;

    let alexnet = build_alexnet(4, [1, 227, 227], 1.0).unwrap();
    let trace = spatial_trace(&alexnet);
    let shape_ok = alexnet.count(Conv) == 5 && alexnet.count(Dense) == 3 && trace == [55, 27, 27, 13, 13, 13, 13, 6];
    let mut net = Network::init(&alexnet, 3).unwrap();
    let x = Tensor::from_fn(&[1, 1, 227, 227], |i| ((i * 7919) % 256) as f64 / 255.0);
    let (logits, cache) = net.forward(&x, Mode::Train, 5).unwrap();
    let loss = ops::softmax_xent(&logits, &[2]).unwrap();
    let grads = net.backward(&cache, &loss.grad_logits).unwrap();
    let finite = logits.data().iter().all(|v| v.is_finite())
        && loss.loss.is_finite()
        && grads.iter().all(|g| g.data().iter().all(|v| v.is_finite()));
    let nonzero = grads.iter().any(|g| g.data().iter().any(|&v| v != 0.0));
    verdict(
        tranet_ok && shape_ok && finite && nonzero,
        format!(
            "TraNet trace {conv_shapes:?}, {params} parameters; AlexNet trace {trace:?}, {} parameters, batch-1 loss {:.4}",
            net.param_count(),
            loss.loss
        ),
    )
}

fn separable_toy() -> Verdict {
    let mut ds = Dataset::new([1, 28, 28], 4).unwrap();
    for k in 0..4 {
        ds.push(Sample { id: k, pixels: vec![0.2 * k as f64; 784], label: k, source: None }).unwrap();
    }
    let cfg = TrainConfig { max_epochs: 50, batch_size: 4, seed: 1, deterministic: true, ..TrainConfig::default() };
    let start = Instant::now();
    let report = train(&build_tranet([1, 28, 28], 4).unwrap(), &ds, &ds, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let acc = evaluate(&report.network, &ds).unwrap().accuracy;
    verdict(acc == 1.0 && secs < 30.0, format!("train accuracy {}, {secs:.1}s", pct(acc)))
}

fn end_to_end(corpus: &[LabeledImage]) -> (Verdict, Network) {
    let cfg = ExperimentConfig { net: NetKind::TraNet, window: WindowSize::DEFAULT, ..base_config() };
    let start = Instant::now();
    let (run, report) = run_experiment(corpus, "mixed", &cfg, SEEDS[0]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let acc = run.metrics.accuracy;
    let v = verdict(
        corpus.len() == 48 && acc >= 0.85 && secs < 300.0,
        format!("{} images, test accuracy {} on {} windows, {secs:.1}s", corpus.len(), pct(acc), run.test_windows),
    );
    (v, report.network)
}

fn window_means(rows: &[SweepRow], net: NetKind) -> Vec<(WindowSize, f64)> {
    WindowSize::PRESETS
        .iter()
        .map(|&w| {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.network == net.name() && (r.window_w, r.window_h) == (w.w, w.h))
                .map(|r| r.test_accuracy.unwrap_or(0.0))
                .collect();
            (w, mean(&accs))
        })
        .collect()
}

fn window_trend(corpus: &[LabeledImage]) -> Verdict {
    let nets = [NetKind::TraNet, NetKind::AlexNetS8];
    let rows = sweep_window_sizes(&nets, &[("mixed".into(), corpus.to_vec())], &WindowSize::PRESETS, &SEEDS, &base_config());
    let all_ok = rows.iter().all(|r| r.status == "ok");
    let mut pass = all_ok;
    let mut parts = Vec::new();
    for net in nets {
        let means = window_means(&rows, net);
        let best = means.iter().map(|m| m.1).fold(f64::MIN, f64::max);
        let at_default = means.iter().find(|m| m.0 == WindowSize::DEFAULT).unwrap().1;
        pass &= at_default == best;
        let cells: Vec<String> = means.iter().map(|(w, m)| format!("{w} {}", pct(*m))).collect();
        parts.push(format!("{net}: {}", cells.join(", ")));
    }
    verdict(pass, parts.join("; "))
}

fn element_means(table: &[ElementRow], net: NetKind, element: &str) -> (f64, Vec<f64>) {
    let row = table.iter().find(|r| r.network == net.name() && r.element == element).unwrap();
    (row.mean.unwrap_or(0.0), row.per_seed.iter().map(|(_, a)| a.unwrap_or(0.0)).collect())
}

fn density_trend() -> Verdict {
    let elements: Vec<(String, Vec<LabeledImage>)> = [Corpus::Column, Corpus::Wall, Corpus::Slab]
        .into_iter()
        .map(|c| (c.name().to_string(), synth_corpus(c, PER_ELEMENT, CORPUS_SEED).unwrap()))
        .collect();
    let (table, _) = compare_elements(&[NetKind::TraNet], &elements, &[WindowSize::DEFAULT], &SEEDS, &base_config());
    let (column, _) = element_means(&table, NetKind::TraNet, "column");
    let (wall, _) = element_means(&table, NetKind::TraNet, "wall");
    let (slab, _) = element_means(&table, NetKind::TraNet, "slab");
    verdict(
        column >= slab && column - slab >= 0.02,
        format!("TraNet column {}, wall {}, slab {}", pct(column), pct(wall), pct(slab)),
    )
}

fn depth_trend() -> Verdict {
    let slab = [("slab".to_string(), synth_corpus(Corpus::Slab, SLAB_IMAGES, CORPUS_SEED).unwrap())];
    let mut base = base_config();
    base.train.max_epochs = DEPTH_EPOCHS;
    let (table, _) = compare_elements(&[NetKind::TraNet, NetKind::AlexNetS8], &slab, &[WindowSize::DEFAULT], &SEEDS, &base);
    let (tranet, per_t) = element_means(&table, NetKind::TraNet, "slab");
    let (alexnet, per_a) = element_means(&table, NetKind::AlexNetS8, "slab");
    let wins = per_a.iter().zip(&per_t).filter(|(a, t)| a > t).count();
    let seeds = |v: &[f64]| v.iter().map(|&a| pct(a)).collect::<Vec<_>>().join("/");
    verdict(
        alexnet >= tranet - 0.01 && wins >= 2,
        format!(
            "slab ({SLAB_IMAGES} images) alexnet-s8 {} ({}) vs tranet {} ({}), alexnet ahead on {wins}/3 seeds",
            pct(alexnet),
            seeds(&per_a),
            pct(tranet),
            seeds(&per_t)
        ),
    )
}

fn truth(img: &LabeledImage) -> Vec<f64> {
    img.curves.iter().map(|c| c.apex.trace as f64 + 0.5).collect()
}

fn localization(model: &Network) -> Verdict {
    let cfg = WindowConfig::new(WindowSize::DEFAULT, NetKind::TraNet.default_input());
    let tolerance = cfg.window.w as f64 / 2.0;
    let mut oracle_stats = MatchStats { true_positives: 0, false_positives: 0, false_negatives: 0 };
    for img in synth_corpus(Corpus::Column, 30, 100).unwrap() {
        let xs: Vec<f64> = localize_rebar(&oracle_map(&img, &cfg).unwrap()).iter().map(|d| d.x_px).collect();
        oracle_stats = oracle_stats.merge(MatchStats::compute(&xs, &truth(&img), tolerance));
    }
    let mut errors = Vec::new();
    let mut model_stats = MatchStats { true_positives: 0, false_positives: 0, false_negatives: 0 };
    for img in synth_corpus(Corpus::Column, HELD_OUT_IMAGES, HELD_OUT_SEED).unwrap() {
        let xs: Vec<f64> = localize_rebar(&classify_windows(model, &img, &cfg).unwrap()).iter().map(|d| d.x_px).collect();
        errors.extend(apex_errors(&xs, &truth(&img)));
        model_stats = model_stats.merge(MatchStats::compute(&xs, &truth(&img), tolerance));
    }
    let mae = mean(&errors);
    verdict(
        oracle_stats.precision() == 1.0 && oracle_stats.recall() == 1.0 && mae <= tolerance,
        format!(
            "oracle precision {:.3} recall {:.3}; model mean apex error {mae:.1}px over {} rebars (limit {tolerance}px), precision {:.3} recall {:.3}",
            oracle_stats.precision(),
            oracle_stats.recall(),
            errors.len(),
            model_stats.precision(),
            model_stats.recall()
        ),
    )
}

fn determinism(corpus: &[LabeledImage], model: &Network) -> Verdict {
    let mut base = base_config();
    base.train.max_epochs = 4;
    let corpora = [("mixed".to_string(), corpus.to_vec())];
    let csv = || {
        let rows = sweep_window_sizes(&[NetKind::TraNet], &corpora, &[WindowSize::DEFAULT, WindowSize::new(250, 100)], &SEEDS[..2], &base);
        let mut out = Vec::new();
        write_sweep_csv(&mut out, &rows).unwrap();
        out
    };
    let (first, second) = (csv(), csv());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.rbsc");
    save_checkpoint(model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    let [c, h, w] = model.spec().input_shape;
    let x = Tensor::from_fn(&[5, c, h, w], |i| ((i * 31) % 97) as f64 / 96.0);
    let bits = |t: Tensor| t.into_data().into_iter().map(f64::to_bits).collect::<Vec<_>>();
    let same_forward = bits(model.predict(&x).unwrap()) == bits(loaded.predict(&x).unwrap());
    verdict(
        first == second && loaded == *model && same_forward,
        format!("sweep.csv {} bytes identical: {}; checkpoint forward bit-identical: {same_forward}", first.len(), first == second),
    )
}

fn run(name: &str, check: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("{tag} {name}: {} [{:.0}s]", v.detail, start.elapsed().as_secs_f64());
    v.pass
}

#[test]
fn acceptance_criteria() {
    ops::set_deterministic(true);
    let corpus = synth_corpus(Corpus::Mixed, PER_ELEMENT, CORPUS_SEED).unwrap();
    let mut results = vec![
        run("1 gradient correctness", gradient_correctness),
        run("2 kernel oracle equivalence", kernel_oracle),
        run("3 architecture fidelity", architecture_fidelity),
        run("4 separable toy training", separable_toy),
    ];

    let mut model = None;
    results.push(run("5 synthetic end-to-end", || {
        let (v, net) = end_to_end(&corpus);
        model = Some(net);
        v
    }));
    results.push(run("6 window-size trend", || window_trend(&corpus)));
    results.push(run("7 density trend", density_trend));
    results.push(run("8 depth trend", depth_trend));
    let model = model.unwrap_or_else(|| Network::init(&build_tranet([1, 28, 28], 4).unwrap(), 1).unwrap());
    results.push(run("9 localization", || localization(&model)));
    results.push(run("10 determinism and round-trip", || determinism(&corpus, &model)));

    let failed = results.iter().filter(|&&p| !p).count();
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
