//! Argument parsing and exit codes.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{
    AnalyzeConfig, CompareConfig, DataConfig, DataFormat, InitConfig, PopulationConfig, RunConfig, TheoryConfig,
    TrainRunConfig,
};
use crate::data::CLASSES;
use crate::dataio::{ReportFormat, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::presets::{ActivationName, Arch, NetworkSetup, TaskName};

pub const OUT_ENV: &str = "CNTNET_OUT";
const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "cntnet", version, about = "Complex-network metrics for populations of neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a Gaussian-initialized population with its initial metric report.
    Init(InitArgs),
    /// Initialize and train a population on an image dataset.
    Train(TrainArgs),
    /// Histogram every metric of a directory of weight files.
    Analyze(AnalyzeArgs),
    /// Monte Carlo check of the untrained-layer null distributions.
    TheoryCheck(TheoryArgs),
    /// Side-by-side summaries of two or more analyze runs.
    Compare(CompareArgs),
    /// Run a config.json echo again.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct PopulationArgs {
    /// Architecture preset.
    #[arg(long, default_value = "fc", value_parser = parse::<Arch>)]
    arch: Arch,
    /// Hidden layers of the preset.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Explicit comma-separated widths (input, hidden..., output), replacing the preset.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    /// Hidden-layer activation.
    #[arg(long = "act", default_value = "sigmoid", value_parser = parse::<ActivationName>)]
    activation: ActivationName,
    /// Output activation for --layers (presets choose their own).
    #[arg(long, value_parser = parse::<ActivationName>)]
    output_act: Option<ActivationName>,
    /// Task for --layers.
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskName>,
    /// Input width when no dataset fixes it.
    #[arg(long, default_value_t = 784)]
    input_dim: usize,
    #[arg(long, default_value_t = CLASSES)]
    classes: usize,
    /// Variance of the initial weights [default: 0.5, or 0.05 for CIFAR-10].
    #[arg(long)]
    sigma2: Option<f64>,
    /// Population size.
    #[arg(long = "n", default_value_t = 5)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    population_id: Option<String>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output directory [default: $CNTNET_OUT/<run name>, or runs/<run name>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value = "json", value_parser = parse::<ReportFormat>)]
    format: ReportFormat,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset directory (MNIST IDX files or CIFAR-10 .bin batches).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "mnist", value_parser = parse_format)]
    data_format: DataFormat,
    #[arg(long, default_value_t = 8000)]
    train_size: usize,
    #[arg(long, default_value_t = 2000)]
    test_size: usize,
}

#[derive(Debug, Args)]
struct InitArgs {
    #[command(flatten)]
    population: PopulationArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    population: PopulationArgs,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Also histogram metrics after every epoch.
    #[arg(long)]
    snapshot_every_epoch: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Directory of .cntw weight files.
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Test inputs fed through each network [default: 100 with --data, else 0].
    #[arg(long)]
    samples: Option<usize>,
    /// Initialization variance to test the weights against.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, default_value_t = cntnet_core::theory::DEFAULT_SIGNIFICANCE)]
    significance: f64,
    #[arg(long)]
    population_id: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// σ the null distributions assume, if different from the sampling σ.
    #[arg(long)]
    null_sigma: Option<f64>,
    #[arg(long, default_value_t = 32)]
    in_degree: usize,
    #[arg(long, default_value_t = 0)]
    out_degree: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = cntnet_core::theory::DEFAULT_SIGNIFICANCE)]
    significance: f64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Analyze output directories (or their analysis.json files).
    #[arg(required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    config: PathBuf,
    /// Write into this directory instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<TaskName, String> {
    match s {
        "classification" => Ok(TaskName::Classification),
        "reconstruction" => Ok(TaskName::Reconstruction),
        _ => Err(format!("unknown task `{s}`")),
    }
}

fn parse_format(s: &str) -> std::result::Result<DataFormat, String> {
    match s {
        "mnist" => Ok(DataFormat::Mnist),
        "cifar" => Ok(DataFormat::Cifar),
        _ => Err(format!("unknown data format `{s}`, expected mnist or cifar")),
    }
}

fn default_out(name: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
    root.join(name)
}

impl DataArgs {
    fn resolve(&self) -> Option<DataConfig> {
        self.data.as_ref().map(|path| DataConfig {
            path: path.clone(),
            format: self.data_format,
            train_size: self.train_size,
            test_size: self.test_size,
        })
    }
}

impl PopulationArgs {
    fn resolve(&self, data_format: Option<DataFormat>, input_dim: Option<usize>) -> Result<PopulationConfig> {
        let input_dim = input_dim.unwrap_or(self.input_dim);
        let (network, arch, depth) = match &self.layers {
            Some(widths) => {
                let task = self.task.unwrap_or(TaskName::Classification);
                let output = self.output_act.unwrap_or(match task {
                    TaskName::Classification => ActivationName::Softmax,
                    TaskName::Reconstruction => ActivationName::Sigmoid,
                });
                let setup = NetworkSetup {
                    widths: widths.clone(),
                    hidden_activation: self.activation,
                    output_activation: output,
                    task,
                };
                (setup, None, None)
            }
            None => {
                if self.output_act.is_some() || self.task.is_some() {
                    return Err(Error::usage("--output-act and --task apply to --layers only"));
                }
                let setup = NetworkSetup::preset(self.arch, self.depth, input_dim, self.classes, self.activation)?;
                (setup, Some(self.arch), Some(self.depth))
            }
        };
        let sigma2 = self.sigma2.unwrap_or(match data_format {
            Some(DataFormat::Cifar) => 0.05,
            _ => 0.5,
        });
        let name = match arch {
            Some(a) => format!("{a}{}", self.depth),
            None => "custom".to_string(),
        };
        let act = format!("{:?}", self.activation).to_lowercase();
        let config = PopulationConfig {
            population_id: self
                .population_id
                .clone()
                .unwrap_or_else(|| format!("{name}-{act}-seed{}", self.seed)),
            arch,
            depth,
            network,
            sigma2,
            size: self.size,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

fn resolve(command: Command) -> Result<ResolvedCommand> {
    Ok(match command {
        Command::Init(a) => {
            let population = a.population.resolve(None, None)?;
            let out = a.output.out.unwrap_or_else(|| default_out(&format!("init-{}", population.population_id)));
            ResolvedCommand::Run(RunConfig::Init(InitConfig {
                population,
                bins: a.output.bins,
                format: a.output.format,
                out,
            }))
        }
        Command::Train(a) => {
            let data = a.data.resolve().ok_or_else(|| Error::usage("train needs --data"))?;
            let dim = match data.format {
                DataFormat::Mnist => 28 * 28,
                DataFormat::Cifar => crate::dataio::cifar::RECORD - 1,
            };
            let population = a.population.resolve(Some(data.format), Some(dim))?;
            let defaults = match population.network.task {
                TaskName::Classification => cntnet_core::train::TrainConfig::classification(1.0, 0),
                TaskName::Reconstruction => cntnet_core::train::TrainConfig::reconstruction(1.0, 0),
            };
            let out = a.output.out.unwrap_or_else(|| default_out(&format!("train-{}", population.population_id)));
            ResolvedCommand::Run(RunConfig::Train(TrainRunConfig {
                population,
                data,
                learning_rate: a.lr.unwrap_or(defaults.learning_rate),
                batch_size: a.batch_size.unwrap_or(defaults.batch_size),
                epochs: a.epochs.unwrap_or(defaults.epochs),
                snapshot_every_epoch: a.snapshot_every_epoch,
                bins: a.output.bins,
                format: a.output.format,
                out,
            }))
        }
        Command::Analyze(a) => {
            let data = a.data.resolve();
            let samples = a.samples.unwrap_or(if data.is_some() { 100 } else { 0 });
            let population_id = a.population_id.unwrap_or_else(|| default_population_id(&a.weights));
            let out = a.output.out.unwrap_or_else(|| default_out(&format!("analyze-{population_id}")));
            ResolvedCommand::Run(RunConfig::Analyze(AnalyzeConfig {
                population_id,
                weights: a.weights,
                data,
                samples,
                sigma2: a.sigma2,
                significance: a.significance,
                bins: a.output.bins,
                format: a.output.format,
                out,
            }))
        }
        Command::TheoryCheck(a) => {
            let out = a.out.unwrap_or_else(|| {
                default_out(&format!("theory-sigma{}-i{}-j{}-seed{}", a.sigma, a.in_degree, a.out_degree, a.seed))
            });
            ResolvedCommand::Run(RunConfig::TheoryCheck(TheoryConfig {
                sigma: a.sigma,
                null_sigma: a.null_sigma,
                in_degree: a.in_degree,
                out_degree: a.out_degree,
                trials: a.trials,
                seed: a.seed,
                significance: a.significance,
                bins: a.bins,
                out,
            }))
        }
        Command::Compare(a) => {
            let out = a.out.unwrap_or_else(|| default_out("compare"));
            ResolvedCommand::Run(RunConfig::Compare(CompareConfig { inputs: a.inputs, out }))
        }
        Command::Replay(a) => ResolvedCommand::Replay(a.config, a.out),
    })
}

/// The weights directory's parent name, e.g. `runs/init-fc3/weights` gives `init-fc3`.
fn default_population_id(weights: &std::path::Path) -> String {
    let dir = if weights.file_name().is_some_and(|n| n == commands::WEIGHTS_DIR) {
        weights.parent()
    } else {
        Some(weights)
    };
    dir.and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .filter(|n| !n.is_empty())
        .unwrap_or_else(|| "population".to_string())
}

enum ResolvedCommand {
    Run(RunConfig),
    Replay(PathBuf, Option<PathBuf>),
}

/// Parses `args` (program name first), runs the command and returns the exit code:
/// 0 ok, 1 usage, 2 I/O, 3 numeric. Errors go to stderr as `error[<category>]: ...`.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = resolve(cli.command).and_then(|c| match c {
        ResolvedCommand::Run(cfg) => commands::run(&cfg),
        ResolvedCommand::Replay(path, out) => commands::replay(&path, out),
    });
    match result {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{}]: {e}", cat.name());
            cat.exit_code()
        }
    }
}
