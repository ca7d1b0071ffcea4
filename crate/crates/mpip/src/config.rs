//! Run configuration: one TOML file, with command-line flags on top.

use std::fs;
use std::path::Path;

use clap::ValueEnum;
use mpip_core::filter::PhaseMode;
use mpip_core::model::TrainConfig;
use mpip_core::synth::WorldConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Controller mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Minimize the predicted target force.
    Reduce,
    /// Maximize the predicted target force.
    Increase,
    /// Track the intact-side reference channel with the control channel.
    Symmetry,
    /// Emit the ensemble-mean control without optimization.
    Reactive,
    /// Replay the nominal control law.
    Passive,
}

impl Mode {
    /// Lower-case name.
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Reduce => "reduce",
            Mode::Increase => "increase",
            Mode::Symmetry => "symmetry",
            Mode::Reactive => "reactive",
            Mode::Passive => "passive",
        }
    }
}

/// Where the synthetic world comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSettings {
    /// Preset name: `gait`, `jumping` or `benchmark`.
    pub preset: String,
    /// Full world description; overrides the preset when present.
    pub custom: Option<WorldConfig>,
}

impl Default for WorldSettings {
    fn default() -> Self {
        Self {
            preset: "gait".into(),
            custom: None,
        }
    }
}

impl WorldSettings {
    /// The configured world, validated.
    pub fn resolve(&self) -> Result<WorldConfig> {
        let world = match &self.custom {
            Some(w) => w.clone(),
            None => WorldConfig::preset(&self.preset)
                .ok_or_else(|| CliError::Config(format!("unknown world preset '{}'", self.preset)))?,
        };
        world.validate()?;
        Ok(world)
    }
}

/// Controller settings of `run` and `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSettings {
    /// Controller mode.
    pub objective: Mode,
    /// Signal horizon in phase.
    pub horizon_x: f64,
    /// Control horizon in phase.
    pub horizon_u: f64,
    /// Weight of the control-change term.
    pub regularization: f64,
    /// Target channel of reduce/increase; the first latent channel when absent.
    pub target: Option<String>,
    /// Reference channel of symmetry; the world's reference channel when absent.
    pub reference: Option<String>,
    /// Solver iteration cap.
    pub max_iterations: usize,
    /// Solver projected-gradient tolerance.
    pub gradient_tolerance: f64,
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            objective: Mode::Reduce,
            horizon_x: 0.25,
            horizon_u: 0.10,
            regularization: 1.0,
            target: None,
            reference: None,
            max_iterations: 50,
            gradient_tolerance: 1e-8,
        }
    }
}

/// Settings of `bench`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    /// Demonstrations used to train the benchmark model when none is given.
    pub demos: usize,
    /// Strides driven through the controller.
    pub trials: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self { demos: 20, trials: 5 }
    }
}

/// Everything a subcommand needs besides paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed.
    pub seed: u64,
    /// Strides written by `generate`.
    pub strides: usize,
    /// Synthetic world.
    pub world: WorldSettings,
    /// Training settings.
    pub train: TrainConfig,
    /// Controller settings.
    pub control: ControlSettings,
    /// Benchmark settings.
    pub bench: BenchSettings,
    /// True when the file set `train.phase_mode`; otherwise the world's
    /// phase mode is used.
    #[serde(skip)]
    pub explicit_phase_mode: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            strides: 20,
            world: WorldSettings::default(),
            train: TrainConfig::default(),
            control: ControlSettings::default(),
            bench: BenchSettings::default(),
            explicit_phase_mode: false,
        }
    }
}

impl RunConfig {
    /// Parses a TOML document.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| CliError::format(path, e.to_string()))?;
        let explicit = raw
            .get("train")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("phase_mode"));
        let mut cfg: RunConfig = raw
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        cfg.explicit_phase_mode = explicit;
        Ok(cfg)
    }

    /// Reads a TOML file, or returns defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml(&text, p)
            }
        }
    }

    /// Training settings with the phase mode resolved against a world.
    pub fn train_for(&self, world_mode: Option<PhaseMode>) -> TrainConfig {
        let mut t = self.train.clone();
        if !self.explicit_phase_mode {
            if let Some(m) = world_mode {
                t.phase_mode = m;
            }
        }
        t
    }

    /// Serializes back to TOML (used to log the effective configuration).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}
