//! Data-driven nonlinear model predictive control for building HVAC.
//!
//! The pipeline is: excite a synthetic building ([`plant`]) with random inputs, window
//! the recorded trajectories into lagged samples ([`dataio`]), fit a differentiable
//! surrogate ([`surrogate`]) on top of a small reverse-mode AD engine ([`diff`]), then
//! close the loop with a receding-horizon controller ([`mpc`]) and score the episode
//! ([`kpi`]).

pub mod dataio;
pub mod diff;
pub mod kpi;
pub mod mpc;
pub mod plant;
pub mod surrogate;

pub use dataio::{Dataset, LagSpec, Normalizer, Trajectory};
pub use kpi::KpiReport;
pub use mpc::{MpcConfig, SolverKind};
pub use surrogate::{ModelKind, SurrogateModel};
pub use plant::{ControlBox, Disturbance, Measurement, Plant, PlantConfig, PlantState};
