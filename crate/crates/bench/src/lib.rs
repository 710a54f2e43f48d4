//! Fixtures shared by the criterion benches in `benches/`.

use hvac_mpc::dataio::{excite, Dims};
use hvac_mpc::mpc::{build_problem, LoopView, MpcProblem};
use hvac_mpc::plant::{make_weather, Disturbance, StateLayout};
use hvac_mpc::surrogate::Architecture;
use hvac_mpc::{ControlBox, LagSpec, ModelKind, MpcConfig, Normalizer, PlantConfig, SurrogateModel, Trajectory};

/// An untrained desk-size surrogate for the single-zone plant, normalized on a short
/// excitation run so inputs sit in a realistic range.
pub fn single_zone_model(kind: ModelKind, lags: LagSpec) -> (SurrogateModel, Trajectory) {
    let cfg = PlantConfig::single_zone();
    let tr = excite(&cfg, 1, 200).expect("excitation");
    let dims = Dims {
        n_x: StateLayout::for_plant(&cfg).len(),
        n_u: ControlBox::for_plant(&cfg).len(),
        n_d: Disturbance::CHANNELS,
    };
    let norm = Normalizer::fit(std::slice::from_ref(&tr)).expect("normalizer");
    let model = SurrogateModel::new(kind, lags, dims, norm, Architecture::desk(), 3).expect("model");
    (model, tr)
}

/// The MPC subproblem at step `t` of a recorded trajectory.
pub fn problem_at<'a>(model: &'a SurrogateModel, tr: &Trajectory, t: usize, cfg: &MpcConfig) -> MpcProblem<'a> {
    let plant = PlantConfig::single_zone();
    let weather = make_weather(&plant.weather, &plant.occupancy, 0, 3, plant.sample_period).expect("weather");
    let log = tr.slice(0, t);
    let x = &tr.x[t];
    let m = hvac_mpc::Measurement {
        zone_temperatures: vec![x[0]],
        heating_power: x[1],
        cooling_power: x[2],
        fan_power: x[3],
        supply_air_temperature: None,
        timestamp: tr.t[t],
    };
    let view = LoopView {
        log: &log,
        measurement: &m,
        clock: tr.t[t],
        index: t,
        weather: &weather,
        config: &plant,
    };
    build_problem(&view, model, cfg, None).expect("problem")
}
