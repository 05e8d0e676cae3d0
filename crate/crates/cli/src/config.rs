//! Fully resolved run descriptions and TOML layering.
//!
//! Every subcommand resolves to one of the `*Run` structs: built-in defaults,
//! then the matching `[section]` of the config file, then command-line flags.
//! The resolved value is what the run manifest stores and what `replay` runs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rebarscan::detect::{Corpus, ExperimentConfig, NetKind};
use rebarscan::gpr::ElementKind;
use rebarscan::train::TrainConfig;
use rebarscan::window::{WindowConfig, WindowSize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRun {
    pub out: PathBuf,
    pub elements: Vec<ElementKind>,
    /// Images per element.
    pub count: usize,
    pub seed: u64,
    pub noise: f64,
}

impl Default for SynthRun {
    fn default() -> Self {
        Self {
            out: "corpus".into(),
            elements: ElementKind::ALL.to_vec(),
            count: 16,
            seed: 0,
            noise: rebarscan::gpr::DEFAULT_NOISE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRun {
    pub images: PathBuf,
    pub out: PathBuf,
    pub windows: WindowConfig,
    pub allow_custom_window: bool,
    pub deterministic: bool,
}

impl Default for DatasetRun {
    fn default() -> Self {
        Self {
            images: "corpus".into(),
            out: "dataset".into(),
            windows: WindowConfig::new(WindowSize::DEFAULT, NetKind::TraNet.default_input()),
            allow_custom_window: false,
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub net: NetKind,
    /// Expected network input `(H, W)`; must match the dataset when set.
    pub input: Option<(usize, usize)>,
    pub train_fraction: f64,
    pub max_per_class: Option<usize>,
    pub balance: bool,
    pub augment: bool,
    /// Replaces `sgd.learning_rate`; the network's default when absent.
    pub learning_rate: Option<f64>,
    pub sgd: TrainConfig,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            out: "model".into(),
            net: NetKind::TraNet,
            input: None,
            train_fraction: 0.8,
            max_per_class: None,
            balance: true,
            augment: true,
            learning_rate: None,
            sgd: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub deterministic: bool,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            checkpoint: "model/model.rbsc".into(),
            dataset: "dataset".into(),
            out: "eval".into(),
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub out: PathBuf,
    /// Manifests directory; a synthetic corpus is rendered when absent.
    pub images: Option<PathBuf>,
    pub corpus: Corpus,
    /// Synthetic images per element.
    pub count: usize,
    pub corpus_seed: u64,
    pub nets: Vec<NetKind>,
    pub windows: Vec<WindowSize>,
    pub seeds: Vec<u64>,
    /// Also run each element on its own and write `elements.csv`.
    pub by_element: bool,
    pub experiment: ExperimentConfig,
}

impl Default for SweepRun {
    fn default() -> Self {
        Self {
            out: "sweep".into(),
            images: None,
            corpus: Corpus::Mixed,
            count: 16,
            corpus_seed: 0,
            nets: vec![NetKind::TraNet, NetKind::AlexNetS8],
            windows: WindowSize::PRESETS.to_vec(),
            seeds: vec![1, 2, 3],
            by_element: false,
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRun {
    pub checkpoint: PathBuf,
    pub images: PathBuf,
    pub out: PathBuf,
    pub window: WindowSize,
    /// Half the window when absent.
    pub stride: Option<(usize, usize)>,
    pub deterministic: bool,
}

impl Default for DetectRun {
    fn default() -> Self {
        Self {
            checkpoint: "model/model.rbsc".into(),
            images: "corpus".into(),
            out: "detect".into(),
            window: WindowSize::DEFAULT,
            stride: None,
            deterministic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRun {
    pub out: PathBuf,
    pub configs: usize,
    pub seed: u64,
}

impl Default for GradcheckRun {
    fn default() -> Self {
        Self {
            out: "gradcheck".into(),
            configs: rebarscan::gradcheck::DEFAULT_CONFIGS,
            seed: 0,
        }
    }
}

/// A resolved subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunSpec {
    Synth(SynthRun),
    Dataset(DatasetRun),
    Train(TrainRun),
    Eval(EvalRun),
    Sweep(SweepRun),
    Detect(DetectRun),
    Gradcheck(GradcheckRun),
}

impl RunSpec {
    pub fn out_dir(&self) -> &Path {
        match self {
            RunSpec::Synth(r) => &r.out,
            RunSpec::Dataset(r) => &r.out,
            RunSpec::Train(r) => &r.out,
            RunSpec::Eval(r) => &r.out,
            RunSpec::Sweep(r) => &r.out,
            RunSpec::Detect(r) => &r.out,
            RunSpec::Gradcheck(r) => &r.out,
        }
    }
}

/// Parsed config file; empty when none was given.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile(toml::Table);

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let table = text
            .parse::<toml::Table>()
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Self(table))
    }

    /// `defaults` overlaid with the `[section]` table, recursively.
    pub fn resolve<T: Serialize + DeserializeOwned>(&self, section: &str, defaults: T) -> Result<T> {
        let mut base = toml::Value::try_from(defaults).context("serializing defaults")?;
        if let Some(overlay) = self.0.get(section) {
            merge(&mut base, overlay);
        }
        base.try_into().with_context(|| format!("invalid [{section}] section"))
    }
}

fn merge(base: &mut toml::Value, overlay: &toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
