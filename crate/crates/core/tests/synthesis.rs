use proptest::prelude::*;

use rebarscan::gpr::{
    apexes, preset_scene, read_manifest, read_pgm, render_bscan, render_clean, travel_time, write_manifest,
    write_pgm, ElementKind, ImageManifest, Rebar, SceneSpec,
};

fn energy(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn apex_is_the_travel_time_minimum(x0 in 0.0f64..0.3, depth in 0.02f64..0.07) {
        let mut scene = SceneSpec::empty(ElementKind::Column, 0);
        scene.rebars.push(Rebar { x0, depth });
        let argmin = (0..scene.n_traces)
            .min_by(|&a, &b| {
                let t = |j: usize| travel_time(j as f64 * scene.trace_spacing, x0, depth, scene.velocity);
                t(a).total_cmp(&t(b))
            })
            .unwrap();
        prop_assert_eq!(apexes(&scene)[0].trace, argmin);
    }

    #[test]
    fn another_rebar_adds_energy(seed in 0u64..500, x in 0.01f64..0.29, depth in 0.03f64..0.06) {
        let mut scene = preset_scene(ElementKind::Wall, seed);
        scene.direct_wave = false;
        prop_assume!(scene.rebars.iter().all(|r| (r.x0 - x).abs() >= 0.02));
        let before = energy(&render_clean(&scene).unwrap());
        scene.rebars.push(Rebar { x0: x, depth });
        prop_assert!(energy(&render_clean(&scene).unwrap()) >= before);
    }
}

#[test]
fn manifest_apexes_match_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ElementKind::ALL {
        let scene = preset_scene(kind, 21);
        let scan = render_bscan(&scene).unwrap();
        let m = ImageManifest {
            image_id: kind.name().into(),
            image_file: format!("{kind}.pgm"),
            width: scan.n_traces,
            height: scan.n_samples,
            scene: scene.clone(),
            apexes: scan.ground_truth.clone(),
        };
        let path = dir.path().join(format!("{kind}.json"));
        write_manifest(&path, &m).unwrap();
        write_pgm(&dir.path().join(&m.image_file), m.width, m.height, &scan.pixels).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(apexes(&back.scene), back.apexes);
        for (a, r) in back.apexes.iter().zip(&back.scene.rebars) {
            let t = travel_time(r.x0, r.x0, r.depth, scene.velocity);
            assert_eq!(a.sample, (t / scene.time_step).round() as usize);
        }
        let (w, h, px) = read_pgm(&dir.path().join(&m.image_file)).unwrap();
        assert_eq!((w, h, px), (scan.n_traces, scan.n_samples, scan.pixels));
    }
}

#[test]
fn noiseless_scans_ignore_the_noise_seed() {
    let mut a = preset_scene(ElementKind::Slab, 3);
    a.noise_sigma = 0.0;
    let mut b = a.clone();
    b.seed = a.seed.wrapping_add(99);
    assert_eq!(render_bscan(&a).unwrap(), render_bscan(&b).unwrap());
    a.noise_sigma = 0.1;
    b.noise_sigma = 0.1;
    assert_ne!(render_bscan(&a).unwrap().pixels, render_bscan(&b).unwrap().pixels);
}

/// Time at which the curves of two neighbouring rebars meet, by bisection
/// between their positions.
fn crossing_time(scene: &SceneSpec, a: &Rebar, b: &Rebar) -> f64 {
    let gap = |x: f64| {
        travel_time(x, a.x0, a.depth, scene.velocity) - travel_time(x, b.x0, b.depth, scene.velocity)
    };
    let (mut lo, mut hi) = (a.x0, b.x0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if gap(lo).signum() == gap(mid).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    travel_time(lo, a.x0, a.depth, scene.velocity)
}

#[test]
fn slab_limbs_overlap_inside_the_window() {
    for seed in 0..10 {
        let scene = preset_scene(ElementKind::Slab, seed);
        let window = scene.time_step * scene.n_samples as f64;
        let overlaps = scene
            .rebars
            .windows(2)
            .any(|p| crossing_time(&scene, &p[0], &p[1]) < window);
        assert!(overlaps, "seed {seed}");
    }
}
