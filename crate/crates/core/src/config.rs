//! Experiment configuration documents (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reference::ReferenceMode;
use crate::sim::{EpisodeConfig, PegGeometry, PegTask, Plan, Scenario, SimError, TransferTask};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Source of ground-truth plans, one per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskConfig {
    Peg(PegTask),
    Transfer(TransferTask),
}

impl TaskConfig {
    pub fn build(&self, scenario: &Scenario, seed: u64) -> Result<Plan, SimError> {
        match self {
            TaskConfig::Peg(task) => {
                let geometry = match scenario {
                    Scenario::PegInHole(g) => g.clone(),
                    _ => PegGeometry::default(),
                };
                task.build(&geometry, seed)
            }
            TaskConfig::Transfer(task) => task.build(seed),
        }
    }
}

/// One compared method: a rollout mode and the representation the policy
/// was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub name: String,
    pub mode: ReferenceMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_with: Option<ReferenceMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Episodes per cell.
    pub episodes: usize,
    /// Episode `i` of every cell uses seed `seed_base + i`.
    pub seed_base: u64,
    /// Action rates; each forms one comparison group.
    pub f_action: Vec<f64>,
    /// Cell every other cell of its group is tested against.
    pub baseline: String,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub save_traces: bool,
    /// Grid spacing of the cumulative success curves (s).
    pub curve_step: f64,
    pub cells: Vec<CellConfig>,
    pub scenario: Scenario,
    pub task: TaskConfig,
    pub episode: EpisodeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            episodes: 50,
            seed_base: 0,
            f_action: vec![15.0],
            baseline: "baseline".into(),
            output_dir: PathBuf::from("out"),
            workers: 0,
            save_traces: true,
            curve_step: 0.1,
            cells: vec![
                CellConfig {
                    name: "baseline".into(),
                    mode: ReferenceMode::PositionOnly,
                    trained_with: None,
                },
                CellConfig {
                    name: "fd".into(),
                    mode: ReferenceMode::FiniteDifference,
                    trained_with: None,
                },
                CellConfig {
                    name: "spline".into(),
                    mode: ReferenceMode::Spline,
                    trained_with: None,
                },
                CellConfig {
                    name: "ablation".into(),
                    mode: ReferenceMode::PositionOnly,
                    trained_with: Some(ReferenceMode::FiniteDifference),
                },
            ],
            scenario: Scenario::PegInHole(PegGeometry::default()),
            task: TaskConfig::Peg(PegTask::default()),
            episode: EpisodeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises")
    }

    /// Episode settings for one cell, action rate and seed.
    pub fn episode_for(&self, cell: &CellConfig, f_action: f64, seed: u64) -> EpisodeConfig {
        let mut cfg = self.episode.clone();
        cfg.mode = cell.mode;
        cfg.policy.trained_with = cell.trained_with;
        cfg.f_action = f_action;
        cfg.seed = seed;
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.cells.is_empty() {
            return invalid("at least one cell is required".into());
        }
        if self.f_action.is_empty() {
            return invalid("at least one action rate is required".into());
        }
        if !(self.curve_step > 0.0) {
            return invalid("curve_step must be positive".into());
        }
        let mut names: Vec<&str> = self.cells.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return invalid("cell names must be unique".into());
        }
        if names.iter().any(|n| n.is_empty() || n.contains(['/', '\\', ','])) {
            return invalid("cell names must be non-empty and free of '/', '\\' and ','".into());
        }
        let plan = self
            .task
            .build(&self.scenario, self.seed_base)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scenario
            .validate(plan.dims())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for &f in &self.f_action {
            for cell in &self.cells {
                self.episode_for(cell, f, self.seed_base)
                    .validate(plan.dims())
                    .map_err(|e| ConfigError::Invalid(format!("cell '{}' at {f} Hz: {e}", cell.name)))?;
            }
        }
        Ok(())
    }
}

/// Label of the comparison group for an action rate.
pub fn group_label(f_action: f64) -> String {
    format!("{f_action}Hz")
}
