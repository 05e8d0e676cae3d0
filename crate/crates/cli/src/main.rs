//! `rebarscan`: synthesize GPR scans, build window datasets, train and
//! evaluate classifiers, sweep window sizes, detect rebar, check gradients.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, DatasetRun, DetectRun, EvalRun, GradcheckRun, RunSpec, SweepRun, SynthRun, TrainRun};
use rebarscan::detect::{Corpus, NetKind};
use rebarscan::gpr::ElementKind;
use rebarscan::window::WindowSize;
use rebarscan::ErrorFamily;

#[derive(Parser)]
#[command(name = "rebarscan", version, about = "Sliding-window CNN rebar detection on GPR B-scans")]
struct Cli {
    /// TOML file with one table per subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic B-scans (PGM) with JSON ground-truth manifests.
    Synth(SynthArgs),
    /// Cut, label and persist windows from a directory of manifests.
    Dataset(DatasetArgs),
    /// Train a network on a dataset directory and save a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset directory.
    Eval(EvalArgs),
    /// Train and evaluate every network × window × seed combination.
    Sweep(SweepArgs),
    /// Classify every window of each scan and localize rebar.
    Detect(DetectArgs),
    /// Finite-difference check of every layer and a small network.
    Gradcheck(GradcheckArgs),
    /// Re-run a recorded run manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only this element; all three by default.
    #[arg(long)]
    element: Option<ElementKind>,
    /// Images per element.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise standard deviation as a fraction of the peak echo.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Directory of image manifests.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Window as WxH; one of 120x30, 150x50, 200x80, 250x100.
    #[arg(long)]
    window: Option<WindowSize>,
    /// Stride as WxH; half the window by default.
    #[arg(long)]
    stride: Option<WindowSize>,
    /// Network input as WxH.
    #[arg(long)]
    input: Option<WindowSize>,
    #[arg(long)]
    channels: Option<usize>,
    /// Add a mirrored copy of every window.
    #[arg(long)]
    augment: bool,
    /// Accept window sizes outside the presets.
    #[arg(long)]
    allow_custom_window: bool,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// tranet, alexnet-s8 or alexnet.
    #[arg(long)]
    net: Option<NetKind>,
    /// Expected network input as WxH; checked against the dataset.
    #[arg(long)]
    input: Option<WindowSize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    max_per_class: Option<usize>,
    /// Keep the class imbalance of the dataset.
    #[arg(long)]
    no_balance: bool,
    /// Do not mirror the training windows.
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of image manifests instead of a synthetic corpus.
    #[arg(long)]
    images: Option<PathBuf>,
    /// column, wall, slab or mixed.
    #[arg(long)]
    corpus: Option<Corpus>,
    /// Synthetic images per element.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    corpus_seed: Option<u64>,
    /// Comma-separated networks.
    #[arg(long, value_delimiter = ',')]
    nets: Option<Vec<NetKind>>,
    /// Comma-separated WxH windows, or `all` for the presets.
    #[arg(long)]
    windows: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_per_class: Option<usize>,
    /// Also run column, wall and slab corpora separately.
    #[arg(long)]
    by_element: bool,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Directory of image manifests.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    window: Option<WindowSize>,
    #[arg(long)]
    stride: Option<WindowSize>,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random configurations per layer kind.
    #[arg(long)]
    configs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn hw(size: WindowSize) -> (usize, usize) {
    (size.h, size.w)
}

fn parse_windows(s: &str) -> Result<Vec<WindowSize>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(WindowSize::PRESETS.to_vec());
    }
    Ok(s.split(',').map(str::parse).collect::<rebarscan::Result<_>>()?)
}

fn resolve(command: Command, cfg: &ConfigFile) -> Result<RunSpec> {
    Ok(match command {
        Command::Synth(a) => {
            let mut r = cfg.resolve("synth", SynthRun::default())?;
            set(&mut r.out, a.out);
            set(&mut r.elements, a.element.map(|e| vec![e]));
            set(&mut r.count, a.count);
            set(&mut r.seed, a.seed);
            set(&mut r.noise, a.noise);
            RunSpec::Synth(r)
        }
        Command::Dataset(a) => {
            let mut r = cfg.resolve("dataset", DatasetRun::default())?;
            set(&mut r.images, a.images);
            set(&mut r.out, a.out);
            if let Some(w) = a.window {
                r.windows.window = w;
                r.windows.stride = w.default_stride();
            }
            set(&mut r.windows.stride, a.stride.map(|s| (s.w, s.h)));
            set(&mut r.windows.input, a.input.map(hw));
            set(&mut r.windows.channels, a.channels);
            r.windows.augment |= a.augment;
            r.allow_custom_window |= a.allow_custom_window;
            r.deterministic |= a.deterministic;
            RunSpec::Dataset(r)
        }
        Command::Train(a) => {
            let mut r = cfg.resolve("train", TrainRun::default())?;
            set(&mut r.dataset, a.dataset);
            set(&mut r.out, a.out);
            set(&mut r.net, a.net);
            if let Some(i) = a.input {
                r.input = Some(hw(i));
            }
            set(&mut r.sgd.max_epochs, a.epochs);
            if a.lr.is_some() {
                r.learning_rate = a.lr;
            }
            set(&mut r.sgd.batch_size, a.batch_size);
            set(&mut r.sgd.seed, a.seed);
            set(&mut r.train_fraction, a.train_fraction);
            if a.max_per_class.is_some() {
                r.max_per_class = a.max_per_class;
            }
            r.balance &= !a.no_balance;
            r.augment &= !a.no_augment;
            r.sgd.deterministic |= a.deterministic;
            RunSpec::Train(r)
        }
        Command::Eval(a) => {
            let mut r = cfg.resolve("eval", EvalRun::default())?;
            set(&mut r.checkpoint, a.checkpoint);
            set(&mut r.dataset, a.dataset);
            set(&mut r.out, a.out);
            r.deterministic |= a.deterministic;
            RunSpec::Eval(r)
        }
        Command::Sweep(a) => {
            let mut r = cfg.resolve("sweep", SweepRun::default())?;
            set(&mut r.out, a.out);
            if a.images.is_some() {
                r.images = a.images;
            }
            set(&mut r.corpus, a.corpus);
            set(&mut r.count, a.count);
            set(&mut r.corpus_seed, a.corpus_seed);
            set(&mut r.nets, a.nets);
            if let Some(w) = a.windows {
                r.windows = parse_windows(&w)?;
            }
            set(&mut r.seeds, a.seeds);
            set(&mut r.experiment.train.max_epochs, a.epochs);
            if a.max_per_class.is_some() {
                r.experiment.max_per_class = a.max_per_class;
            }
            r.by_element |= a.by_element;
            r.experiment.train.deterministic |= a.deterministic;
            RunSpec::Sweep(r)
        }
        Command::Detect(a) => {
            let mut r = cfg.resolve("detect", DetectRun::default())?;
            set(&mut r.checkpoint, a.checkpoint);
            set(&mut r.images, a.images);
            set(&mut r.out, a.out);
            set(&mut r.window, a.window);
            if let Some(s) = a.stride {
                r.stride = Some((s.w, s.h));
            }
            r.deterministic |= a.deterministic;
            RunSpec::Detect(r)
        }
        Command::Gradcheck(a) => {
            let mut r = cfg.resolve("gradcheck", GradcheckRun::default())?;
            set(&mut r.out, a.out);
            set(&mut r.configs, a.configs);
            set(&mut r.seed, a.seed);
            RunSpec::Gradcheck(r)
        }
        Command::Replay { manifest } => commands::read_run_manifest(&manifest)?.run,
    })
}

/// One exit code per error family; 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<commands::GradcheckFailed>().is_some() {
        return 9;
    }
    match err.downcast_ref::<rebarscan::Error>().map(rebarscan::Error::family) {
        Some(ErrorFamily::Shape) => 3,
        Some(ErrorFamily::InvalidArgument) => 4,
        Some(ErrorFamily::Checkpoint) => 5,
        Some(ErrorFamily::Divergence) => 6,
        Some(ErrorFamily::Data) => 7,
        Some(ErrorFamily::Io) => 8,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = ConfigFile::load(cli.config.as_deref())
        .and_then(|cfg| resolve(cli.command, &cfg))
        .and_then(|run| commands::execute(&run));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
