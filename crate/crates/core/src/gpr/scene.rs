use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::physics::travel_time;
use crate::error::{arg_err, Error, Result};
use crate::rng;

pub const DEFAULT_VELOCITY: f64 = 1.0e8;
pub const DEFAULT_CENTER_FREQ: f64 = 2.7e9;
pub const DEFAULT_TRACE_SPACING: f64 = 5.0e-4;
pub const DEFAULT_TRACES: usize = 600;
pub const DEFAULT_SAMPLES: usize = 512;
/// Deepest reflector the default time window is sized for.
pub const DESIGN_DEPTH: f64 = 0.07;
pub const DEFAULT_NOISE: f64 = 0.25;

/// `n_samples · dt` spans 1.25× the two-way time to [`DESIGN_DEPTH`].
pub fn default_time_step() -> f64 {
    1.25 * 2.0 * DESIGN_DEPTH / DEFAULT_VELOCITY / DEFAULT_SAMPLES as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Column,
    Wall,
    Slab,
}

impl ElementKind {
    pub const ALL: [ElementKind; 3] = [ElementKind::Column, ElementKind::Wall, ElementKind::Slab];

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Column => "column",
            ElementKind::Wall => "wall",
            ElementKind::Slab => "slab",
        }
    }

    /// Nominal centre-to-centre rebar spacing in metres.
    pub fn spacing(self) -> f64 {
        match self {
            ElementKind::Column => 0.150,
            ElementKind::Wall => 0.100,
            ElementKind::Slab => 0.050,
        }
    }

    /// Relative spacing jitter.
    fn spacing_jitter(self) -> f64 {
        match self {
            ElementKind::Column => 0.03,
            ElementKind::Wall => 0.05,
            ElementKind::Slab => 0.20,
        }
    }

    /// Mean cover depth and its uniform jitter, metres.
    fn depth(self) -> (f64, f64) {
        match self {
            ElementKind::Column | ElementKind::Wall => (0.050, 0.005),
            ElementKind::Slab => (0.040, 0.008),
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "column" => Ok(ElementKind::Column),
            "wall" => Ok(ElementKind::Wall),
            "slab" => Ok(ElementKind::Slab),
            _ => arg_err(format!("unknown element `{s}` (expected column, wall or slab)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rebar {
    /// Horizontal position along the scan line, metres.
    pub x0: f64,
    /// Cover depth, metres.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub element: ElementKind,
    pub rebars: Vec<Rebar>,
    pub velocity: f64,
    pub center_freq: f64,
    pub trace_spacing: f64,
    pub time_step: f64,
    pub n_traces: usize,
    pub n_samples: usize,
    /// Gaussian noise standard deviation as a fraction of the peak amplitude.
    pub noise_sigma: f64,
    pub direct_wave: bool,
    /// Seeds the noise field only; positions are already fixed in `rebars`.
    pub seed: u64,
}

impl SceneSpec {
    /// Empty scene on the default grid.
    pub fn empty(element: ElementKind, seed: u64) -> Self {
        Self {
            element,
            rebars: Vec::new(),
            velocity: DEFAULT_VELOCITY,
            center_freq: DEFAULT_CENTER_FREQ,
            trace_spacing: DEFAULT_TRACE_SPACING,
            time_step: default_time_step(),
            n_traces: DEFAULT_TRACES,
            n_samples: DEFAULT_SAMPLES,
            noise_sigma: DEFAULT_NOISE,
            direct_wave: true,
            seed,
        }
    }

    pub fn width_m(&self) -> f64 {
        self.n_traces as f64 * self.trace_spacing
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("velocity", self.velocity),
            ("center frequency", self.center_freq),
            ("trace spacing", self.trace_spacing),
            ("time step", self.time_step),
        ];
        for (what, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return arg_err(format!("{what} must be positive, got {v}"));
            }
        }
        if self.n_traces == 0 || self.n_samples == 0 {
            return arg_err("scene grid must have at least one trace and one sample");
        }
        if !(self.noise_sigma >= 0.0) {
            return arg_err(format!("noise sigma must be non-negative, got {}", self.noise_sigma));
        }
        let window = self.time_step * self.n_samples as f64;
        for (i, r) in self.rebars.iter().enumerate() {
            if !(r.depth > 0.0) {
                return arg_err(format!("rebar {i} has non-positive depth {}", r.depth));
            }
            if !(0.0..=self.width_m()).contains(&r.x0) {
                return arg_err(format!("rebar {i} at x0 = {} lies outside the scan line", r.x0));
            }
            let apex = travel_time(r.x0, r.x0, r.depth, self.velocity);
            if apex >= window {
                return arg_err(format!(
                    "time window {window:.3e} s is shorter than the {apex:.3e} s echo of rebar {i}"
                ));
            }
        }
        Ok(())
    }

    /// Smallest centre-to-centre distance between neighbouring rebars.
    pub fn min_spacing(&self) -> Option<f64> {
        let mut xs: Vec<f64> = self.rebars.iter().map(|r| r.x0).collect();
        xs.sort_by(f64::total_cmp);
        xs.windows(2).map(|p| p[1] - p[0]).min_by(f64::total_cmp)
    }
}

/// Seeded element preset. Rebars repeat at the element's nominal spacing
/// with per-seed jitter on spacing and depth; the first sits 0.3–0.7
/// spacings from the left edge and none closer than a quarter spacing to the
/// right edge.
pub fn preset_scene(kind: ElementKind, seed: u64) -> SceneSpec {
    let mut scene = SceneSpec::empty(kind, rng::derive_seed(seed, "noise"));
    let mut r = rng::stream(seed, &format!("scene/{}", kind.name()));
    let spacing = kind.spacing();
    let jitter = kind.spacing_jitter();
    let (depth, depth_jitter) = kind.depth();
    let limit = scene.width_m() - 0.25 * spacing;
    let mut x = r.gen_range(0.3..0.7) * spacing;
    while x <= limit {
        scene.rebars.push(Rebar {
            x0: x,
            depth: depth + r.gen_range(-depth_jitter..=depth_jitter),
        });
        x += spacing * (1.0 + r.gen_range(-jitter..=jitter));
    }
    scene
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_spacing_at_least_twice_slab() {
        for seed in 0..20 {
            let c = preset_scene(ElementKind::Column, seed).min_spacing().unwrap();
            let s = preset_scene(ElementKind::Slab, seed).min_spacing().unwrap();
            assert!(c >= 2.0 * s, "seed {seed}: column {c}, slab {s}");
        }
    }

    #[test]
    fn presets_valid_and_deterministic() {
        for kind in ElementKind::ALL {
            for seed in 0..10 {
                let a = preset_scene(kind, seed);
                a.validate().unwrap();
                assert_eq!(a, preset_scene(kind, seed));
                assert!(!a.rebars.is_empty());
            }
        }
        assert_ne!(preset_scene(ElementKind::Wall, 1), preset_scene(ElementKind::Wall, 2));
    }

    #[test]
    fn element_names_round_trip() {
        for kind in ElementKind::ALL {
            assert_eq!(kind.name().parse::<ElementKind>().unwrap(), kind);
        }
        assert!("bridge".parse::<ElementKind>().is_err());
    }

    #[test]
    fn short_window_rejected() {
        let mut s = preset_scene(ElementKind::Column, 0);
        s.n_samples = 100;
        assert!(s.validate().is_err());
    }
}
