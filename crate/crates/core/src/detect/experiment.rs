use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::gpr::{preset_scene, render_bscan, ElementKind, SceneSpec};
use crate::net::{build_alexnet, build_tranet, NetworkSpec, ALEXNET_MIN_INPUT};
use crate::rng;
use crate::train::{split_dataset, train, Metrics, TrainConfig, TrainReport};
use crate::window::{balance_classes, build_dataset, flip_augment, LabeledImage, WindowConfig, WindowSize};

/// Width multiplier of the scaled AlexNet variant.
pub const ALEXNET_S8_SCALE: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NetKind {
    #[serde(rename = "tranet")]
    TraNet,
    #[serde(rename = "alexnet-s8")]
    AlexNetS8,
    #[serde(rename = "alexnet")]
    AlexNet,
}

impl NetKind {
    pub fn name(self) -> &'static str {
        match self {
            NetKind::TraNet => "tranet",
            NetKind::AlexNetS8 => "alexnet-s8",
            NetKind::AlexNet => "alexnet",
        }
    }

    /// Input `(H, W)` used when none is configured.
    pub fn default_input(self) -> (usize, usize) {
        match self {
            NetKind::TraNet => (28, 28),
            NetKind::AlexNetS8 => (ALEXNET_MIN_INPUT, ALEXNET_MIN_INPUT),
            NetKind::AlexNet => (227, 227),
        }
    }

    /// SGD step used when none is configured. The AlexNet variants stall
    /// with dead units at the TraNet rate.
    pub fn default_learning_rate(self) -> f64 {
        match self {
            NetKind::TraNet => 0.01,
            NetKind::AlexNetS8 | NetKind::AlexNet => 0.005,
        }
    }

    pub fn build(self, input_shape: [usize; 3], num_classes: usize) -> Result<NetworkSpec> {
        match self {
            NetKind::TraNet => build_tranet(input_shape, num_classes),
            NetKind::AlexNetS8 => {
                let mut spec = build_alexnet(num_classes, input_shape, ALEXNET_S8_SCALE)?;
                spec.name = self.name().into();
                Ok(spec)
            }
            NetKind::AlexNet => build_alexnet(num_classes, input_shape, 1.0),
        }
    }
}

impl fmt::Display for NetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tranet" => Ok(NetKind::TraNet),
            "alexnet-s8" => Ok(NetKind::AlexNetS8),
            "alexnet" => Ok(NetKind::AlexNet),
            _ => arg_err(format!("unknown network `{s}` (expected tranet, alexnet-s8 or alexnet)")),
        }
    }
}

/// A synthetic image collection: one element preset or all three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corpus {
    Column,
    Wall,
    Slab,
    Mixed,
}

impl Corpus {
    pub fn elements(self) -> Vec<ElementKind> {
        match self {
            Corpus::Column => vec![ElementKind::Column],
            Corpus::Wall => vec![ElementKind::Wall],
            Corpus::Slab => vec![ElementKind::Slab],
            Corpus::Mixed => ElementKind::ALL.to_vec(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Corpus::Column => "column",
            Corpus::Wall => "wall",
            Corpus::Slab => "slab",
            Corpus::Mixed => "mixed",
        }
    }
}

impl From<ElementKind> for Corpus {
    fn from(kind: ElementKind) -> Self {
        match kind {
            ElementKind::Column => Corpus::Column,
            ElementKind::Wall => Corpus::Wall,
            ElementKind::Slab => Corpus::Slab,
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Corpus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mixed" => Ok(Corpus::Mixed),
            other => other.parse::<ElementKind>().map(Corpus::from),
        }
    }
}

/// Scenes of `per_element` images for each element of `corpus`, keyed
/// `<element>-<index>`. Image `i` of an element is the same in every corpus
/// built from the same seed.
pub fn corpus_scenes(corpus: Corpus, per_element: usize, seed: u64) -> Vec<(String, SceneSpec)> {
    corpus
        .elements()
        .into_iter()
        .flat_map(|kind| {
            (0..per_element).map(move |i| {
                let image_seed = rng::derive_seed_at(seed, &format!("image/{}", kind.name()), i as u64);
                (format!("{}-{i:03}", kind.name()), preset_scene(kind, image_seed))
            })
        })
        .collect()
}

/// Renders [`corpus_scenes`] in memory.
pub fn synth_corpus(corpus: Corpus, per_element: usize, seed: u64) -> Result<Vec<LabeledImage>> {
    corpus_scenes(corpus, per_element, seed)
        .into_iter()
        .map(|(id, scene)| Ok(LabeledImage::from_bscan(id, &render_bscan(&scene)?, &scene)))
        .collect()
}

/// Everything one train/evaluate run needs besides the images and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub net: NetKind,
    /// Network input `(H, W)`; the network's default when absent.
    pub input: Option<(usize, usize)>,
    pub window: WindowSize,
    /// Half the window when absent.
    pub stride: Option<(usize, usize)>,
    pub train_fraction: f64,
    /// Cap on windows per class after balancing to the rarest class.
    pub max_per_class: Option<usize>,
    /// Mirror the training portion after the split.
    pub augment: bool,
    /// Overrides the network's default step.
    pub learning_rate: Option<f64>,
    /// Training settings; `learning_rate` and `seed` are set per run.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            net: NetKind::TraNet,
            input: None,
            window: WindowSize::DEFAULT,
            stride: None,
            train_fraction: 0.8,
            max_per_class: None,
            augment: true,
            learning_rate: None,
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn input(&self) -> (usize, usize) {
        self.input.unwrap_or(self.net.default_input())
    }

    pub fn window_config(&self) -> WindowConfig {
        let mut cfg = WindowConfig::new(self.window, self.input());
        if let Some(stride) = self.stride {
            cfg.stride = stride;
        }
        cfg
    }
}

/// One finished train/evaluate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub network: String,
    pub window: WindowSize,
    pub corpus: String,
    pub seed: u64,
    pub metrics: Metrics,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_windows: usize,
    pub test_windows: usize,
    pub wall_secs: f64,
}

/// Windows → class balancing → stratified split → mirrored training
/// windows → training. The seed drives balancing, split, initialization,
/// shuffling and dropout.
pub fn run_experiment(
    images: &[LabeledImage],
    corpus: &str,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(RunReport, TrainReport)> {
    let start = Instant::now();
    let wcfg = cfg.window_config();
    let all = build_dataset(images, &wcfg)?;
    let balanced = balance_classes(&all, cfg.max_per_class, rng::derive_seed(seed, "balance"))?;
    let (mut train_set, test) = split_dataset(&balanced, cfg.train_fraction, rng::derive_seed(seed, "split"))?;
    if cfg.augment {
        train_set = flip_augment(&train_set)?;
    }
    let spec = cfg.net.build(wcfg.input_shape(), all.num_classes())?;
    let tcfg = TrainConfig {
        seed,
        learning_rate: cfg.learning_rate.unwrap_or(cfg.net.default_learning_rate()),
        ..cfg.train.clone()
    };
    let report = train(&spec, &train_set, &test, &tcfg)?;
    let run = RunReport {
        network: cfg.net.name().into(),
        window: cfg.window,
        corpus: corpus.into(),
        seed,
        metrics: report.test_metrics.clone(),
        best_epoch: report.best_epoch,
        epochs_run: report.epochs_run,
        train_windows: train_set.len(),
        test_windows: test.len(),
        wall_secs: start.elapsed().as_secs_f64(),
    };
    Ok((run, report))
}
