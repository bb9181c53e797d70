use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::{Protocol, Transmitter};
use crate::error::{Error, Result};

/// Which label a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Protocol,
    Transmitter,
    Joint,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Protocol, TaskKind::Transmitter, TaskKind::Joint];

    pub fn class_count(self) -> usize {
        match self {
            TaskKind::Protocol => 3,
            TaskKind::Transmitter => 4,
            TaskKind::Joint => 12,
        }
    }

    /// Class names in index order. Joint classes are `transmitter_protocol`,
    /// transmitter-major.
    pub fn class_names(self) -> Vec<String> {
        match self {
            TaskKind::Protocol => Protocol::ALL.iter().map(|p| p.name().to_string()).collect(),
            TaskKind::Transmitter => Transmitter::ALL
                .iter()
                .map(|t| t.name().to_string())
                .collect(),
            TaskKind::Joint => Transmitter::ALL
                .iter()
                .flat_map(|t| {
                    Protocol::ALL
                        .iter()
                        .map(move |p| format!("{}_{}", t.name(), p.name()))
                })
                .collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Protocol => "protocol",
            TaskKind::Transmitter => "transmitter",
            TaskKind::Joint => "joint",
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "protocol" => Ok(TaskKind::Protocol),
            "transmitter" => Ok(TaskKind::Transmitter),
            "joint" => Ok(TaskKind::Joint),
            other => Err(Error::Config(format!(
                "unknown task {other:?}, expected one of protocol, transmitter, joint"
            ))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
