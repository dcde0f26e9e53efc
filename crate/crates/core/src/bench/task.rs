use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Checker;
use crate::llm::TaskInput;

pub const DEFAULT_TRIALS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Correctness,
    Complexity,
    Creativity,
    Functionality,
}

impl Aspect {
    pub const ALL: [Aspect; 4] = [
        Aspect::Correctness,
        Aspect::Complexity,
        Aspect::Creativity,
        Aspect::Functionality,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aspect::Correctness => "correctness",
            Aspect::Complexity => "complexity",
            Aspect::Creativity => "creativity",
            Aspect::Functionality => "functionality",
        }
    }
}

impl fmt::Display for Aspect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum TaskSpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("task {0}: applicable_aspects is empty")]
    NoAspects(String),
    #[error("task {0}: no checker")]
    NoChecker(String),
    #[error("task {0}: trials must be at least 1")]
    NoTrials(String),
}

fn default_trials() -> u32 {
    DEFAULT_TRIALS
}

/// A benchmark task. The same file is accepted by `build` as a plain task,
/// since the pipeline ignores the benchmark-only fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(flatten)]
    pub task: TaskInput,
    pub applicable_aspects: Vec<Aspect>,
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// Free-form remarks carried by the data file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TaskSpec {
    pub fn name(&self) -> &str {
        &self.task.name
    }

    pub fn checker(&self) -> Checker {
        self.task.checker.expect("validated spec has a checker")
    }

    pub fn instruction(&self) -> &str {
        self.task.query_text()
    }

    pub fn validate(self) -> Result<Self, TaskSpecError> {
        let name = self.task.name.clone();
        if self.applicable_aspects.is_empty() {
            return Err(TaskSpecError::NoAspects(name));
        }
        if self.task.checker.is_none() {
            return Err(TaskSpecError::NoChecker(name));
        }
        if self.trials == 0 {
            return Err(TaskSpecError::NoTrials(name));
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, TaskSpecError> {
        let spec: TaskSpec = serde_json::from_str(text).map_err(|source| TaskSpecError::Parse {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        spec.validate()
    }

    pub fn load(path: &Path) -> Result<Self, TaskSpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaskSpecError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let spec: TaskSpec = serde_json::from_str(&text).map_err(|source| TaskSpecError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        spec.validate()
    }

    /// Every `*.json` directly under `dir`, sorted by file name.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, TaskSpecError> {
        let io = |source| TaskSpecError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json") && p.is_file())
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::load(p)).collect()
    }
}
