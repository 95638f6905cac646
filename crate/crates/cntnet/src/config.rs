//! Fully resolved run parameters. Every command writes its config as
//! `config.json`; `cntnet replay` runs it again.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataio::ReportFormat;
use crate::error::{Error, Result};
use crate::presets::{Arch, NetworkSetup};

pub const CONFIG_ECHO: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Mnist,
    Cifar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    pub format: DataFormat,
    /// The first `train_size` records train, the next `test_size` test.
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub population_id: String,
    pub arch: Option<Arch>,
    pub depth: Option<usize>,
    pub network: NetworkSetup,
    pub sigma2: f64,
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub population: PopulationConfig,
    pub bins: usize,
    pub format: ReportFormat,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub population: PopulationConfig,
    pub data: DataConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub snapshot_every_epoch: bool,
    pub bins: usize,
    pub format: ReportFormat,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub population_id: String,
    /// Directory of `.cntw` files, read in name order.
    pub weights: PathBuf,
    pub data: Option<DataConfig>,
    /// Test images fed through the networks for the input-dependent metrics.
    pub samples: usize,
    /// Variance the weights were drawn from, enabling the goodness-of-fit report.
    pub sigma2: Option<f64>,
    pub significance: f64,
    pub bins: usize,
    pub format: ReportFormat,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub sigma: f64,
    pub null_sigma: Option<f64>,
    pub in_degree: usize,
    pub out_degree: usize,
    pub trials: usize,
    pub seed: u64,
    pub significance: f64,
    pub bins: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Output directories of `analyze` runs.
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Init(InitConfig),
    Train(TrainRunConfig),
    Analyze(AnalyzeConfig),
    TheoryCheck(TheoryConfig),
    Compare(CompareConfig),
}

impl RunConfig {
    pub fn out(&self) -> &PathBuf {
        match self {
            RunConfig::Init(c) => &c.out,
            RunConfig::Train(c) => &c.out,
            RunConfig::Analyze(c) => &c.out,
            RunConfig::TheoryCheck(c) => &c.out,
            RunConfig::Compare(c) => &c.out,
        }
    }

    pub fn set_out(&mut self, out: PathBuf) {
        match self {
            RunConfig::Init(c) => c.out = out,
            RunConfig::Train(c) => c.out = out,
            RunConfig::Analyze(c) => c.out = out,
            RunConfig::TheoryCheck(c) => c.out = out,
            RunConfig::Compare(c) => c.out = out,
        }
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::usage(format!("--{name} must be positive and finite, got {v}")))
    }
}

pub(crate) fn nonzero(name: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::usage(format!("--{name} must be at least 1")))
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        positive("sigma2", self.sigma2)?;
        nonzero("n", self.size)?;
        if self.network.widths.len() < 2 || self.network.widths.contains(&0) {
            return Err(Error::usage(format!("invalid layer widths {:?}", self.network.widths)));
        }
        Ok(())
    }
}
