use proptest::prelude::*;

use rebarscan::data::Rect;
use rebarscan::detect::{
    apex_errors, classify_windows, localize_rebar, oracle_map, run_experiment, sweep_window_sizes, synth_corpus,
    write_sweep_csv, Corpus, ExperimentConfig, LabelMap, MapEntry, MatchStats, NetKind,
};
use rebarscan::gpr::{preset_scene, render_bscan, ElementKind};
use rebarscan::net::{build_tranet, Network};
use rebarscan::window::{split_image, LabeledImage, WindowConfig, WindowLabel, WindowSize};

fn image(kind: ElementKind, seed: u64) -> LabeledImage {
    let scene = preset_scene(kind, seed);
    LabeledImage::from_bscan(format!("{kind}-{seed}"), &render_bscan(&scene).unwrap(), &scene)
}

fn truth(img: &LabeledImage) -> Vec<f64> {
    img.curves.iter().map(|c| c.apex.trace as f64 + 0.5).collect()
}

#[test]
fn label_maps_cover_every_rect_and_normalize() {
    let img = image(ElementKind::Wall, 2);
    let cfg = WindowConfig::new(WindowSize::DEFAULT, (28, 28));
    let net = Network::init(&build_tranet([1, 28, 28], 4).unwrap(), 5).unwrap();
    let map = classify_windows(&net, &img, &cfg).unwrap();
    let rects = split_image(img.width, img.height, cfg.window, cfg.stride).unwrap();
    assert_eq!(map.entries.len(), rects.len());
    for (e, r) in map.entries.iter().zip(&rects) {
        assert_eq!(e.rect, *r);
        assert!((e.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    assert_eq!(classify_windows(&net, &img, &cfg).unwrap(), map);

    let wrong = WindowConfig::new(WindowSize::DEFAULT, (32, 32));
    assert!(classify_windows(&net, &img, &wrong).is_err());
    let tiny = LabeledImage { width: 100, pixels: vec![0; 100 * img.height], ..img };
    assert!(classify_windows(&net, &tiny, &cfg).is_err());
}

#[test]
fn oracle_labels_localize_every_sparse_rebar() {
    let cfg = WindowConfig::new(WindowSize::DEFAULT, (28, 28));
    let tolerance = cfg.window.w as f64 / 2.0;
    let mut stats = MatchStats { true_positives: 0, false_positives: 0, false_negatives: 0 };
    for seed in 0..30 {
        let img = image(ElementKind::Column, seed);
        let found = localize_rebar(&oracle_map(&img, &cfg).unwrap());
        let xs: Vec<f64> = found.iter().map(|d| d.x_px).collect();
        stats = stats.merge(MatchStats::compute(&xs, &truth(&img), tolerance));
        assert!(apex_errors(&xs, &truth(&img)).iter().all(|&e| e <= tolerance));
    }
    assert_eq!(stats.precision(), 1.0, "{stats:?}");
    assert_eq!(stats.recall(), 1.0, "{stats:?}");
}

fn arbitrary_map() -> impl Strategy<Value = LabelMap> {
    let window = WindowSize::DEFAULT;
    let rects = split_image(600, 512, window, window.default_stride()).unwrap();
    prop::collection::vec((0usize..4, 0.01f64..1.0), rects.len()).prop_map(move |draws| LabelMap {
        image_id: "p".into(),
        width: 600,
        window,
        stride: window.default_stride(),
        entries: rects
            .iter()
            .zip(draws)
            .map(|(r, (l, p))| {
                let label = WindowLabel::from_index(l).unwrap();
                let mut probs = vec![(1.0 - p) / 3.0; 4];
                probs[label.index()] = p;
                MapEntry { rect: *r, label, probs }
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detections_increase_and_stay_inside(map in arbitrary_map()) {
        let found = localize_rebar(&map);
        for pair in found.windows(2) {
            prop_assert!(pair[0].x_px < pair[1].x_px);
        }
        for d in &found {
            prop_assert!(d.x_px >= 0.0 && d.x_px < map.width as f64);
            prop_assert!((0.0..=1.0).contains(&d.confidence));
        }
    }
}

#[test]
fn single_peak_rect_gives_its_centre() {
    let map = LabelMap {
        image_id: "one".into(),
        width: 600,
        window: WindowSize::DEFAULT,
        stride: (100, 40),
        entries: vec![MapEntry {
            rect: Rect::new(100, 0, 200, 80),
            label: WindowLabel::Peak,
            probs: vec![0.0, 1.0, 0.0, 0.0],
        }],
    };
    assert_eq!(localize_rebar(&map)[0].x_px, 200.0);
}

fn quick_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig { max_per_class: Some(6), ..Default::default() };
    cfg.train.max_epochs = 1;
    cfg.train.deterministic = true;
    cfg
}

#[test]
fn sweep_covers_the_cross_product_reproducibly() {
    let corpus = vec![("mixed".to_string(), synth_corpus(Corpus::Mixed, 1, 4).unwrap())];
    let nets = [NetKind::TraNet, NetKind::AlexNetS8];
    let run = || {
        let rows = sweep_window_sizes(&nets, &corpus, &WindowSize::PRESETS, &[1], &quick_config());
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        (rows, buf)
    };
    let (rows, first) = run();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.status != "ok" || r.test_accuracy.is_some()));
    assert_eq!(run().1, first);
}

#[test]
fn experiment_split_sizes_are_consistent() {
    let images = synth_corpus(Corpus::Column, 2, 9).unwrap();
    let (run, report) = run_experiment(&images, "column", &quick_config(), 3).unwrap();
    // 24 balanced windows: 19 train (mirrored to 38) and 5 test
    assert_eq!((run.train_windows, run.test_windows), (38, 5));
    assert_eq!(report.epochs_run, 1);
}
