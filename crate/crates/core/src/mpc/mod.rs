//! Receding-horizon control on a learned surrogate.
//!
//! Each step builds an [`MpcProblem`] from the measured history and a weather
//! forecast, solves it with projected-gradient Adam ([`solve_gdm`]) or a projected
//! quasi-Newton SQP ([`solve_sqp`]), and applies the first planned control.

mod episode;
mod problem;
mod solvers;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diff::DiffError;
use crate::plant::PlantError;
use crate::surrogate::SurrogateError;

pub use episode::{
    build_problem, max_conditioning_policy, random_policy, receding_horizon, run_loop, run_policy, solve,
    warm_start, Decision, Episode, LoopView, StepLog,
};
pub use problem::{ControlPlan, MpcProblem, Objective};
pub use solvers::{solve_gdm, solve_sqp, GdmConfig, SolveResult, SqpConfig};

#[derive(Debug, thiserror::Error)]
pub enum MpcError {
    #[error("{0}")]
    Contract(String),
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error("non-finite cost or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Gdm,
    Sqp,
}

impl SolverKind {
    pub const ALL: [SolverKind; 2] = [SolverKind::Gdm, SolverKind::Sqp];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Gdm => "gdm",
            SolverKind::Sqp => "sqp",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gdm" => Ok(SolverKind::Gdm),
            "sqp" => Ok(SolverKind::Sqp),
            _ => Err(format!("unknown solver {s:?}, expected gdm or sqp")),
        }
    }
}

/// Controller settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Weight on comfort-band violation, kW per kelvin.
    pub gamma: f64,
    /// Smoothness weight used for every control when `r_diag` is unset.
    pub smoothness: f64,
    pub r_diag: Option<Vec<f64>>,
    pub solver: SolverKind,
    pub gdm: GdmConfig,
    pub sqp: SqpConfig,
    /// Standard deviation of Gaussian noise added to the ambient forecast, kelvin.
    pub forecast_noise: f64,
    pub seed: u64,
    /// Soft band on the supply-air temperature, when the plant reports one.
    pub supply_band: Option<(f64, f64)>,
    /// Also solve from the box midpoint and keep the cheaper plan. Escapes the
    /// zero-airflow corner where supply temperature has no gradient.
    pub midpoint_restart: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            gamma: 50.0,
            smoothness: 0.1,
            r_diag: None,
            solver: SolverKind::Sqp,
            gdm: GdmConfig::default(),
            sqp: SqpConfig::default(),
            forecast_noise: 0.0,
            seed: 0,
            supply_band: Some((5.0, 20.0)),
            midpoint_restart: true,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: &str| Err(MpcError::Contract(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(self.gamma >= 0.0) || !(self.smoothness >= 0.0) {
            return bad("gamma and smoothness must be nonnegative");
        }
        if !(self.forecast_noise >= 0.0) {
            return bad("forecast noise must be nonnegative");
        }
        if let Some((lo, hi)) = self.supply_band {
            if !(lo <= hi) {
                return bad("supply band needs lower <= upper");
            }
        }
        if !(self.gdm.learning_rate > 0.0) {
            return bad("gdm learning rate must be positive");
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, MpcError> {
        let c: Self = serde_json::from_str(s).map_err(|e| MpcError::Contract(format!("mpc config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MpcError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)
            .map_err(|e| MpcError::Contract(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }
}
