use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::physics::{ricker, ricker_support, travel_time};
use super::scene::SceneSpec;
use crate::error::Result;
use crate::rng;

/// Travel time at which a reflection has unit spreading gain.
const REFERENCE_TIME: f64 = 1.0e-9;
const DIRECT_WAVE_AMPLITUDE: f64 = 0.5;

/// Ground-truth hyperbola apex in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Apex {
    /// Column (trace index).
    pub trace: usize,
    /// Row (time sample index).
    pub sample: usize,
}

/// Rendered radargram. Rows are time samples, columns are traces.
#[derive(Debug, Clone, PartialEq)]
pub struct BScan {
    pub n_traces: usize,
    pub n_samples: usize,
    pub dx: f64,
    pub dt: f64,
    /// Raw amplitudes, row-major `[n_samples × n_traces]`.
    pub amplitude: Vec<f64>,
    /// Min-max normalized 8-bit image of `amplitude`.
    pub pixels: Vec<u8>,
    pub ground_truth: Vec<Apex>,
}

impl BScan {
    pub fn at(&self, sample: usize, trace: usize) -> f64 {
        self.amplitude[sample * self.n_traces + trace]
    }
}

/// Apex pixel of every rebar: the trace nearest `x0` and `round(t(x0) / dt)`.
pub fn apexes(scene: &SceneSpec) -> Vec<Apex> {
    scene
        .rebars
        .iter()
        .map(|r| Apex {
            trace: ((r.x0 / scene.trace_spacing).round() as usize).min(scene.n_traces - 1),
            sample: (travel_time(r.x0, r.x0, r.depth, scene.velocity) / scene.time_step).round() as usize,
        })
        .collect()
}

/// Noise-free amplitudes: every rebar's spreading-weighted Ricker echo plus
/// the optional direct wave.
pub fn render_clean(scene: &SceneSpec) -> Result<Vec<f64>> {
    scene.validate()?;
    let (nt, ns, dt) = (scene.n_traces, scene.n_samples, scene.time_step);
    let mut amp = vec![0.0; nt * ns];
    let support = ricker_support(scene.center_freq);
    if scene.direct_wave {
        let t0 = 1.0 / scene.center_freq;
        for s in 0..ns {
            let v = DIRECT_WAVE_AMPLITUDE * ricker(s as f64 * dt - t0, scene.center_freq);
            amp[s * nt..(s + 1) * nt].iter_mut().for_each(|a| *a += v);
        }
    }
    for r in &scene.rebars {
        for j in 0..nt {
            let t = travel_time(j as f64 * scene.trace_spacing, r.x0, r.depth, scene.velocity);
            let gain = REFERENCE_TIME / t;
            let lo = ((t - support) / dt).ceil().max(0.0) as usize;
            let hi = (((t + support) / dt).floor() as usize).min(ns - 1);
            for s in lo..=hi {
                amp[s * nt + j] += gain * ricker(s as f64 * dt - t, scene.center_freq);
            }
        }
    }
    Ok(amp)
}

/// Min-max normalization to `[0, 255]`; a flat field maps to zeros.
pub fn quantize(amplitude: &[f64]) -> Vec<u8> {
    let lo = amplitude.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = amplitude.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; amplitude.len()];
    }
    amplitude
        .iter()
        .map(|&a| ((a - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

pub fn render_bscan(scene: &SceneSpec) -> Result<BScan> {
    let mut amplitude = render_clean(scene)?;
    let peak = amplitude.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let sigma = scene.noise_sigma * peak;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let mut r = rng::stream(scene.seed, "noise");
        amplitude.iter_mut().for_each(|a| *a += normal.sample(&mut r));
    }
    Ok(BScan {
        n_traces: scene.n_traces,
        n_samples: scene.n_samples,
        dx: scene.trace_spacing,
        dt: scene.time_step,
        pixels: quantize(&amplitude),
        amplitude,
        ground_truth: apexes(scene),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::scene::{preset_scene, ElementKind, Rebar};

    fn single(noise: f64) -> SceneSpec {
        let mut s = SceneSpec::empty(ElementKind::Column, 1);
        s.rebars.push(Rebar { x0: 0.1502, depth: 0.05 });
        s.noise_sigma = noise;
        s.direct_wave = false;
        s
    }

    #[test]
    fn single_rebar_peaks_at_apex_trace() {
        let scene = single(0.0);
        let b = render_bscan(&scene).unwrap();
        let apex = b.ground_truth[0];
        assert_eq!(apex.trace, 300);
        assert_eq!(apex.sample, (1e-9 / scene.time_step).round() as usize);
        let col_max = |j: usize| (0..b.n_samples).map(|s| b.at(s, j)).fold(f64::MIN, f64::max);
        let best = (0..b.n_traces).max_by(|&a, &c| col_max(a).total_cmp(&col_max(c))).unwrap();
        assert_eq!(best, apex.trace);
        for d in 1..40 {
            assert!(col_max(apex.trace + d) < col_max(apex.trace + d - 1));
            assert!(col_max(apex.trace - d) < col_max(apex.trace - d + 1));
        }
    }

    #[test]
    fn empty_quiet_scene_is_zero() {
        let mut s = SceneSpec::empty(ElementKind::Wall, 0);
        s.noise_sigma = 0.0;
        s.direct_wave = false;
        let b = render_bscan(&s).unwrap();
        assert!(b.amplitude.iter().all(|&a| a == 0.0));
        assert!(b.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn seeded_render_is_bit_identical() {
        let s = preset_scene(ElementKind::Slab, 4);
        assert_eq!(render_bscan(&s).unwrap(), render_bscan(&s).unwrap());
    }

    #[test]
    fn quantize_spans_full_range() {
        let q = quantize(&[-1.0, 0.0, 1.0]);
        assert_eq!(q, vec![0, 128, 255]);
    }
}
