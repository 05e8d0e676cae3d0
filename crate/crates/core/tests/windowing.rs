use proptest::prelude::*;

use rebarscan::data::Rect;
use rebarscan::gpr::{preset_scene, render_bscan, travel_time, ElementKind, Rebar, SceneSpec};
use rebarscan::window::{
    auto_label, build_dataset, split_image, Hyperbola, LabelGeometry, LabeledImage, WindowConfig, WindowLabel,
    WindowSize,
};

fn element() -> impl Strategy<Value = ElementKind> {
    prop_oneof![Just(ElementKind::Column), Just(ElementKind::Wall), Just(ElementKind::Slab)]
}

fn preset_window() -> impl Strategy<Value = WindowSize> {
    prop::sample::select(WindowSize::PRESETS.to_vec())
}

/// Rows the echo of `rebar` occupies over the rect's columns, straight from
/// the travel-time formula.
fn limb_hits_rect(scene: &SceneSpec, rebar: &Rebar, r: &Rect) -> bool {
    (r.x..r.right()).any(|j| {
        let row = travel_time(j as f64 * scene.trace_spacing, rebar.x0, rebar.depth, scene.velocity) / scene.time_step;
        row >= r.y as f64 && row < r.bottom() as f64
    })
}

#[test]
fn exact_and_floor_tilings() {
    assert_eq!(split_image(400, 160, WindowSize::new(200, 80), (200, 80)).unwrap().len(), 4);
    assert_eq!(split_image(400, 160, WindowSize::new(250, 100), (250, 100)).unwrap().len(), 1);
    assert!(split_image(100, 160, WindowSize::new(200, 80), (100, 40)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn rect_count_formula(
        width in 50usize..700, height in 50usize..600,
        w in 10usize..200, h in 10usize..200,
        sx in 1usize..120, sy in 1usize..120,
    ) {
        prop_assume!(w <= width && h <= height);
        let rects = split_image(width, height, WindowSize::new(w, h), (sx, sy)).unwrap();
        prop_assert_eq!(rects.len(), ((width - w) / sx + 1) * ((height - h) / sy + 1));
        prop_assert!(rects.iter().all(|r| r.right() <= width && r.bottom() <= height));
    }

    #[test]
    fn full_stride_partitions(width in 50usize..400, height in 50usize..300, w in 5usize..50, h in 5usize..50) {
        let rects = split_image(width, height, WindowSize::new(w, h), (w, h)).unwrap();
        let (cols, rows) = (width / w * w, height / h * h);
        let mut hits = vec![0u8; cols * rows];
        for r in &rects {
            for y in r.y..r.bottom() {
                for x in r.x..r.right() {
                    hits[y * cols + x] += 1;
                }
            }
        }
        prop_assert!(hits.iter().all(|&n| n == 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn labelling_properties(kind in element(), seed in 0u64..1000, window in preset_window()) {
        let scene = preset_scene(kind, seed);
        let curves = Hyperbola::from_scene(&scene);
        let geometry = LabelGeometry::default();
        let rects = split_image(scene.n_traces, scene.n_samples, window, window.default_stride()).unwrap();
        for r in &rects {
            let label = auto_label(r, &curves, &geometry);
            prop_assert_eq!(label, auto_label(r, &curves, &geometry));
            let inside = curves.iter().filter(|c| {
                (r.x..r.right()).contains(&c.apex.trace) && (r.y..r.bottom()).contains(&c.apex.sample)
            });
            if label == WindowLabel::Peak {
                prop_assert!(inside.count() >= 1);
            }
            if label == WindowLabel::Other {
                let reach = 1.5 * r.w as f64;
                let near = curves.iter().any(|c| {
                    let col = c.apex.trace as f64;
                    col >= r.x as f64 - reach && col < r.right() as f64 + reach
                });
                if !near {
                    for rebar in &scene.rebars {
                        prop_assert!(!limb_hits_rect(&scene, rebar, r), "limb crosses Other rect {:?}", r);
                    }
                }
            }
        }
    }

    #[test]
    fn labels_mirror_with_the_scene(x0 in 0.02f64..0.28, depth in 0.03f64..0.07, window in preset_window(), i in 0usize..400) {
        let mut scene = SceneSpec::empty(ElementKind::Wall, 0);
        scene.rebars.push(Rebar { x0, depth });
        let mut mirrored = scene.clone();
        mirrored.rebars[0].x0 = (scene.n_traces - 1) as f64 * scene.trace_spacing - x0;
        let rects = split_image(scene.n_traces, scene.n_samples, window, (7, 5)).unwrap();
        let r = rects[i % rects.len()];
        let flipped = Rect::new(scene.n_traces - r.x - r.w, r.y, r.w, r.h);
        let g = LabelGeometry::default();
        prop_assert_eq!(
            auto_label(&r, &Hyperbola::from_scene(&scene), &g).mirrored(),
            auto_label(&flipped, &Hyperbola::from_scene(&mirrored), &g)
        );
    }
}

#[test]
fn labels_do_not_depend_on_input_size() {
    let images: Vec<LabeledImage> = ElementKind::ALL
        .iter()
        .map(|&k| {
            let scene = preset_scene(k, 11);
            LabeledImage::from_bscan(k.name(), &render_bscan(&scene).unwrap(), &scene)
        })
        .collect();
    let small = build_dataset(&images, &WindowConfig::new(WindowSize::DEFAULT, (28, 28))).unwrap();
    let large = build_dataset(&images, &WindowConfig::new(WindowSize::DEFAULT, (67, 67))).unwrap();
    assert_eq!(small.labels(), large.labels());
    assert!(small.samples().iter().all(|s| s.pixels.iter().all(|&v| (0.0..=1.0).contains(&v))));
}

#[test]
fn sparse_scene_peaks_hold_apexes() {
    let scene = preset_scene(ElementKind::Column, 4);
    let image = LabeledImage::from_bscan("c", &render_bscan(&scene).unwrap(), &scene);
    let ds = build_dataset(std::slice::from_ref(&image), &WindowConfig::new(WindowSize::DEFAULT, (28, 28))).unwrap();
    let truth = rebarscan::gpr::apexes(&scene);
    for s in ds.samples().iter().filter(|s| s.label == WindowLabel::Peak.index()) {
        let r = s.source.as_ref().unwrap().rect;
        assert!(truth.iter().any(|a| (r.x..r.right()).contains(&a.trace) && (r.y..r.bottom()).contains(&a.sample)));
    }
}
