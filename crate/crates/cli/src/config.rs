use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use hvac_mpc::surrogate::{Architecture, TrainConfig};
use hvac_mpc::{LagSpec, ModelKind, MpcConfig, PlantConfig};

use crate::CliError;

/// Scale of data generation and training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 20 trajectories of 200 steps, width 64, 200 epochs; minutes on a laptop.
    #[default]
    Desk,
    /// 120 trajectories of 500 steps, width 256, 1000 epochs.
    Paper,
}

impl Preset {
    pub fn trajectories(self) -> usize {
        match self {
            Preset::Desk => 20,
            Preset::Paper => 120,
        }
    }

    pub fn steps(self) -> usize {
        match self {
            Preset::Desk => 200,
            Preset::Paper => 500,
        }
    }

    pub fn architecture(self) -> Architecture {
        match self {
            Preset::Desk => Architecture::desk(),
            Preset::Paper => Architecture::paper(),
        }
    }

    pub fn train_config(self) -> TrainConfig {
        match self {
            Preset::Desk => TrainConfig::desk(),
            Preset::Paper => TrainConfig::paper(),
        }
    }
}

/// Built-in plants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PlantPreset {
    #[default]
    SingleZone,
    FiveZone,
}

impl PlantPreset {
    pub fn config(self) -> PlantConfig {
        match self {
            PlantPreset::SingleZone => PlantConfig::single_zone(),
            PlantPreset::FiveZone => PlantConfig::five_zone(),
        }
    }
}

/// Loads a plant config file, or the built-in plant when no path is given.
pub fn resolve_plant(path: Option<&Path>, fallback: PlantPreset) -> Result<PlantConfig, CliError> {
    match path {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::usage(format!("plant config {} does not exist", p.display())));
            }
            Ok(PlantConfig::load(p)?)
        }
        None => Ok(fallback.config()),
    }
}

/// Everything one end-to-end run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Plant config file; `plant` is used when unset.
    pub plant_config: Option<PathBuf>,
    pub plant: PlantPreset,
    pub lags: LagSpec,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub mpc: MpcConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub preset: Preset,
    /// Episode length of the closed-loop run.
    pub days: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::with_preset(Preset::Desk)
    }
}

impl RunConfig {
    pub fn with_preset(preset: Preset) -> Self {
        Self {
            plant_config: None,
            plant: PlantPreset::SingleZone,
            lags: LagSpec::new(1, 1, 1),
            model: ModelKind::Mlp,
            train: preset.train_config(),
            mpc: MpcConfig::default(),
            out_dir: PathBuf::from("runs"),
            seed: 0,
            preset,
            days: 2,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let c: Self = serde_json::from_str(&s).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        c.validate()?;
        Ok(c)
    }

    /// Referenced files must exist.
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(p) = &self.plant_config {
            if !p.is_file() {
                return Err(CliError::usage(format!("plant config {} does not exist", p.display())));
            }
        }
        self.mpc.validate()?;
        self.train.validate()?;
        if self.days == 0 {
            return Err(CliError::usage("days must be at least 1"));
        }
        Ok(())
    }

    pub fn plant_config(&self) -> Result<PlantConfig, CliError> {
        resolve_plant(self.plant_config.as_deref(), self.plant)
    }
}
