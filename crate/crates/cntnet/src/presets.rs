//! Named architectures.
//!
//! `fc` and `ae` come in depths 3 and 7 (hidden layers). The `small`, `medium` and
//! `big` tiers are 3-hidden-layer classifiers sized at 1/16 of 28K, 450K and 7M
//! parameters for a 784-pixel input: hidden widths 2, 32 and 310.

use std::fmt;
use std::str::FromStr;

use cntnet_core::train::{LossKind, Task};
use cntnet_core::{ActivationKind, LayerSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Fc,
    Ae,
    Small,
    Medium,
    Big,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Fc, Arch::Ae, Arch::Small, Arch::Medium, Arch::Big];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Fc => "fc",
            Arch::Ae => "ae",
            Arch::Small => "small",
            Arch::Medium => "medium",
            Arch::Big => "big",
        }
    }

    pub fn task(self) -> Task {
        match self {
            Arch::Ae => Task::Reconstruction,
            _ => Task::Classification,
        }
    }

    /// Hidden widths for `depth` hidden layers.
    pub fn hidden_widths(self, depth: usize) -> Result<Vec<usize>> {
        let w: &[usize] = match (self, depth) {
            (Arch::Fc, 3) => &[128, 64, 32],
            (Arch::Fc, 7) => &[128, 96, 64, 64, 48, 32, 32],
            (Arch::Ae, 3) => &[128, 64, 128],
            (Arch::Ae, 7) => &[256, 128, 64, 32, 64, 128, 256],
            (Arch::Small, 3) => &[2, 2, 2],
            (Arch::Medium, 3) => &[32, 32, 32],
            (Arch::Big, 3) => &[310, 310, 310],
            (Arch::Fc | Arch::Ae, _) => {
                return Err(Error::usage(format!("{self} presets have depth 3 or 7, not {depth}")))
            }
            _ => return Err(Error::usage(format!("{self} preset has depth 3, not {depth}"))),
        };
        Ok(w.to_vec())
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown architecture `{s}`")))
    }
}

/// Fully resolved network shape and training objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSetup {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    pub hidden_activation: ActivationName,
    pub output_activation: ActivationName,
    pub task: TaskName,
}

/// Serde-friendly activation name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationName {
    Linear,
    Relu,
    Sigmoid,
    Softmax,
}

impl From<ActivationName> for ActivationKind {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Linear => ActivationKind::Linear,
            ActivationName::Relu => ActivationKind::Relu,
            ActivationName::Sigmoid => ActivationKind::Sigmoid,
            ActivationName::Softmax => ActivationKind::Softmax,
        }
    }
}

impl FromStr for ActivationName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ActivationName::Linear),
            "relu" => Ok(ActivationName::Relu),
            "sigmoid" => Ok(ActivationName::Sigmoid),
            "softmax" => Ok(ActivationName::Softmax),
            _ => Err(Error::usage(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Classification,
    Reconstruction,
}

impl From<Task> for TaskName {
    fn from(t: Task) -> Self {
        match t {
            Task::Classification => TaskName::Classification,
            Task::Reconstruction => TaskName::Reconstruction,
        }
    }
}

impl From<TaskName> for Task {
    fn from(t: TaskName) -> Self {
        match t {
            TaskName::Classification => Task::Classification,
            TaskName::Reconstruction => Task::Reconstruction,
        }
    }
}

impl TaskName {
    pub fn loss(self) -> LossKind {
        match self {
            TaskName::Classification => LossKind::CrossEntropy,
            TaskName::Reconstruction => LossKind::Mse,
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            TaskName::Classification => "accuracy",
            TaskName::Reconstruction => "mse",
        }
    }
}

impl NetworkSetup {
    /// Classifiers end in softmax over `classes`; autoencoders reproduce the input
    /// through a sigmoid so outputs share the `[0, 1]` pixel range.
    pub fn preset(arch: Arch, depth: usize, input_dim: usize, classes: usize, hidden: ActivationName) -> Result<Self> {
        if hidden == ActivationName::Softmax {
            return Err(Error::usage("softmax is only allowed on the output layer"));
        }
        let mut widths = vec![input_dim];
        widths.extend(arch.hidden_widths(depth)?);
        let (out, output_activation) = match arch.task() {
            Task::Classification => (classes, ActivationName::Softmax),
            Task::Reconstruction => (input_dim, ActivationName::Sigmoid),
        };
        widths.push(out);
        Ok(NetworkSetup {
            widths,
            hidden_activation: hidden,
            output_activation,
            task: arch.task().into(),
        })
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let n = self.widths.len() - 1;
        self.widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n {
                    self.output_activation
                } else {
                    self.hidden_activation
                };
                LayerSpec::dense(w[0], w[1], act.into())
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}
