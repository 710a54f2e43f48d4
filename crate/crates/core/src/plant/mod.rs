//! Synthetic building emulator.
//!
//! Two plants are provided: a single room served by a fan coil unit and a five-zone
//! office floor served by a VAV air handler with terminal reheat. Both are lumped RC
//! networks advanced with forward Euler at the control sample period, with low-level
//! PI loops between the supervisory commands and the delivered heat.

mod config;
mod schedule;
mod weather;

pub use config::{CentralUnit, LoopGains, PiGains, PlantConfig, AIR_CP};
pub use schedule::{comfort_bounds, hour_of_day, ComfortSchedule, OccupancySchedule};
pub use weather::{load_weather_csv, make_weather, save_weather_csv, WeatherSpec};

use thiserror::Error;

use crate::dataio::Trajectory;

/// Sensible heat per occupant, W.
pub const OCCUPANT_GAIN: f64 = 120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant config: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
}

/// Weather and occupancy acting on the building during one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disturbance {
    pub ambient_temperature: f64,
    /// W/m²
    pub solar_gain: f64,
    /// persons
    pub occupancy: f64,
}

impl Disturbance {
    pub const CHANNELS: usize = 3;

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.ambient_temperature, self.solar_gain, self.occupancy]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            ambient_temperature: v[0],
            solar_gain: v[1],
            occupancy: v[2],
        }
    }
}

/// Box on the supervisory commands, in plant units.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBox {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBox {
    pub fn for_plant(config: &PlantConfig) -> Self {
        if config.is_multizone() {
            let n = config.zone_count;
            let mut names: Vec<String> = (1..=n).map(|i| format!("u_dam_{i}")).collect();
            names.extend((1..=n).map(|i| format!("u_yReaHea_{i}")));
            names.push("u_yHea".into());
            names.push("u_yCoo".into());
            let m = names.len();
            Self {
                names,
                lower: vec![0.0; m],
                upper: vec![1.0; m],
            }
        } else {
            Self {
                names: vec!["u_fan".into(), "u_T_supply".into()],
                lower: vec![0.0, 12.0],
                upper: vec![1.0, 40.0],
            }
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.len()
            && u
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    pub fn clamp(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

/// Hidden and observed plant state.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantState {
    pub zone_temperatures: Vec<f64>,
    /// Integrators of every low-level loop; index 0 is the signed coil integrator in
    /// `[-1, 1]`, tracking loops stay in `[0, 1]`.
    pub pi_integrator_states: Vec<f64>,
    /// Last output of every low-level loop.
    pub loop_outputs: Vec<f64>,
    /// Coil outlet temperature (the central supply air in the five-zone plant).
    pub supply_air_temperature: f64,
    /// Seconds since the start of the episode.
    pub clock: f64,
}

impl PlantState {
    /// Loop order: single-zone `[coil heat, coil cool]`; five-zone
    /// `[coil heat, coil cool, airflow x5, reheat x5]`.
    pub fn initial(config: &PlantConfig, zone_temperature: f64) -> Self {
        let loops = if config.is_multizone() {
            2 + 2 * config.zone_count
        } else {
            2
        };
        let supply = config
            .central
            .as_ref()
            .map_or(zone_temperature, |c| c.setpoint_center);
        Self {
            zone_temperatures: vec![zone_temperature; config.zone_count],
            pi_integrator_states: vec![0.0; loops],
            loop_outputs: vec![0.0; loops],
            supply_air_temperature: supply,
            clock: 0.0,
        }
    }
}

/// What the supervisory controller observes after a step.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub zone_temperatures: Vec<f64>,
    /// kW
    pub heating_power: f64,
    /// kW
    pub cooling_power: f64,
    /// kW
    pub fan_power: f64,
    /// °C, five-zone only.
    pub supply_air_temperature: Option<f64>,
    pub timestamp: f64,
}

impl Measurement {
    /// Channel order `[T_zone.., P_heat, P_cool, P_fan, (T_supply)]`.
    pub fn state_vector(&self) -> Vec<f64> {
        let mut v = self.zone_temperatures.clone();
        v.extend([self.heating_power, self.cooling_power, self.fan_power]);
        if let Some(ts) = self.supply_air_temperature {
            v.push(ts);
        }
        v
    }
}

/// Index map of the measured state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateLayout {
    pub zones: usize,
    pub has_supply: bool,
}

impl StateLayout {
    pub fn for_plant(config: &PlantConfig) -> Self {
        Self {
            zones: config.zone_count,
            has_supply: config.is_multizone(),
        }
    }

    pub fn len(&self) -> usize {
        self.zones + 3 + usize::from(self.has_supply)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn zone_channels(&self) -> std::ops::Range<usize> {
        0..self.zones
    }

    pub fn heating(&self) -> usize {
        self.zones
    }

    pub fn cooling(&self) -> usize {
        self.zones + 1
    }

    pub fn fan(&self) -> usize {
        self.zones + 2
    }

    pub fn supply(&self) -> Option<usize> {
        self.has_supply.then_some(self.zones + 3)
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.zones).map(|i| format!("T_zone_{i}")).collect();
        v.extend(["P_heat".into(), "P_cool".into(), "P_fan".into()]);
        if self.has_supply {
            v.push("T_supply".into());
        }
        v
    }
}

/// Reference-tracking PI loop on its own output, with a clamped integrator.
fn track(gains: PiGains, integ: &mut f64, out: &mut f64, reference: f64) {
    let e = reference - *out;
    *integ = (*integ + gains.ki * e).clamp(0.0, 1.0);
    *out = (gains.kp * e + *integ).clamp(0.0, 1.0);
}

/// Split-range PI on a temperature error: one signed integrator in [-1, 1], positive
/// output opens the heating valve and negative output the cooling valve, so the two
/// never run together.
fn coil_loops(gains: PiGains, state: &mut PlantState, error: f64) -> (f64, f64) {
    let integ = (state.pi_integrator_states[0] + gains.ki * error).clamp(-1.0, 1.0);
    let y = (gains.kp * error + integ).clamp(-1.0, 1.0);
    state.pi_integrator_states[0] = integ;
    let (yh, yc) = (y.max(0.0), (-y).max(0.0));
    state.loop_outputs[0] = yh;
    state.loop_outputs[1] = yc;
    (yh, yc)
}

fn check_finite(what: &str, v: &[f64]) -> Result<(), PlantError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(PlantError::NumericDomain(format!("{what}[{i}] is not finite"))),
        None => Ok(()),
    }
}

/// Advances the plant by one sample period.
///
/// `control` is expected inside [`ControlBox::for_plant`]; callers clamp first.
pub fn step(
    state: &PlantState,
    control: &[f64],
    disturbance: &Disturbance,
    config: &PlantConfig,
) -> Result<(PlantState, Measurement), PlantError> {
    let n = config.zone_count;
    let expected = ControlBox::for_plant(config).len();
    if control.len() != expected {
        return Err(PlantError::InvalidArgument(format!(
            "expected {expected} controls, got {}",
            control.len()
        )));
    }
    check_finite("control", control)?;
    check_finite("disturbance", &disturbance.to_vec())?;
    check_finite("zone_temperatures", &state.zone_temperatures)?;
    check_finite("supply_air_temperature", &[state.supply_air_temperature])?;

    let mut next = state.clone();
    let temps = &state.zone_temperatures;
    let mut q_hvac = vec![0.0; n];
    let (heating, cooling, fan, supply) = if let Some(central) = &config.central {
        let g = &config.pi_gains;
        let dam = &control[0..n];
        let reh = &control[n..2 * n];
        let (y_hea, y_coo) = (control[2 * n], control[2 * n + 1]);

        let mut flow_frac = vec![0.0; n];
        let mut reheat_pos = vec![0.0; n];
        for i in 0..n {
            let a = 2 + i;
            let r = 2 + n + i;
            let (mut ia, mut oa) = (next.pi_integrator_states[a], next.loop_outputs[a]);
            track(g.airflow, &mut ia, &mut oa, dam[i]);
            next.pi_integrator_states[a] = ia;
            next.loop_outputs[a] = oa;
            flow_frac[i] = oa;
            let (mut ir, mut or) = (next.pi_integrator_states[r], next.loop_outputs[r]);
            track(g.reheat, &mut ir, &mut or, reh[i]);
            next.pi_integrator_states[r] = ir;
            next.loop_outputs[r] = or;
            reheat_pos[i] = or;
        }

        let mdot: Vec<f64> = (0..n).map(|i| flow_frac[i] * config.max_airflow[i]).collect();
        let mdot_total: f64 = mdot.iter().sum();
        let mdot_max: f64 = config.max_airflow.iter().sum();
        let t_return = if mdot_total > 1e-9 {
            mdot.iter().zip(temps).map(|(m, t)| m * t).sum::<f64>() / mdot_total
        } else {
            temps.iter().sum::<f64>() / n as f64
        };
        let oa = central.outdoor_air_fraction;
        let t_mix = (1.0 - oa) * t_return + oa * disturbance.ambient_temperature;
        let setpoint = central.setpoint_center + central.setpoint_span * (y_hea - y_coo);
        let (yh, yc) = coil_loops(g.supply, &mut next, setpoint - state.supply_air_temperature);
        let design = mdot_max * AIR_CP;
        let t_supply =
            t_mix + yh * central.heating_capacity / design - yc * central.cooling_capacity / design;
        let ratio = mdot_total / mdot_max;
        let coil_heat = ratio * yh * central.heating_capacity;
        let coil_cool = ratio * yc * central.cooling_capacity;

        let mut reheat_total = 0.0;
        for i in 0..n {
            let cap = config.heating_capacity[i];
            let dt_reheat = cap / (config.max_airflow[i] * AIR_CP);
            reheat_total += flow_frac[i] * reheat_pos[i] * cap;
            q_hvac[i] = mdot[i] * AIR_CP * (t_supply + reheat_pos[i] * dt_reheat - temps[i]);
        }
        next.supply_air_temperature = t_supply;
        (
            coil_heat + reheat_total,
            coil_cool,
            config.fan_power_coefficient * ratio.powi(3),
            Some(t_supply),
        )
    } else {
        let fan = control[0];
        let setpoint = control[1];
        let (yh, yc) = coil_loops(
            config.pi_gains.supply,
            &mut next,
            setpoint - state.supply_air_temperature,
        );
        let design = config.max_airflow[0] * AIR_CP;
        let qh_cap = config.heating_capacity[0];
        let qc_cap = config.cooling_capacity[0];
        next.supply_air_temperature = temps[0] + yh * qh_cap / design - yc * qc_cap / design;
        let qh = fan * yh * qh_cap;
        let qc = fan * yc * qc_cap;
        q_hvac[0] = qh - qc;
        (qh, qc, config.fan_power_coefficient * fan.powi(3), None)
    };

    let dt = config.sample_period;
    let occupant_share = disturbance.occupancy / n as f64;
    for i in 0..n {
        let t = temps[i];
        let mut flux = config.ambient_conductance[i] * (disturbance.ambient_temperature - t);
        for (j, &tj) in temps.iter().enumerate() {
            flux += config.interzone_conductance[i][j] * (tj - t);
        }
        flux += q_hvac[i];
        flux += disturbance.solar_gain * config.solar_aperture[i];
        flux += OCCUPANT_GAIN * occupant_share;
        next.zone_temperatures[i] = t + dt / config.capacitance[i] * flux;
    }
    next.clock = state.clock + dt;
    check_finite("next zone_temperatures", &next.zone_temperatures)?;

    let m = Measurement {
        zone_temperatures: next.zone_temperatures.clone(),
        heating_power: heating / 1000.0,
        cooling_power: cooling / 1000.0,
        fan_power: fan / 1000.0,
        supply_air_temperature: supply,
        timestamp: next.clock,
    };
    check_finite("measurement", &m.state_vector())?;
    Ok((next, m))
}

/// A plant instance with its current state and last measurement.
#[derive(Clone, Debug)]
pub struct Plant {
    config: PlantConfig,
    state: PlantState,
    last: Measurement,
    control_box: ControlBox,
    clamped: usize,
}

impl Plant {
    pub fn new(config: PlantConfig, zone_temperature: f64) -> Result<Self, PlantError> {
        config.validate()?;
        let state = PlantState::initial(&config, zone_temperature);
        Ok(Self::from_state(config, state))
    }

    pub fn from_state(config: PlantConfig, state: PlantState) -> Self {
        let last = Measurement {
            zone_temperatures: state.zone_temperatures.clone(),
            heating_power: 0.0,
            cooling_power: 0.0,
            fan_power: 0.0,
            supply_air_temperature: config
                .is_multizone()
                .then_some(state.supply_air_temperature),
            timestamp: state.clock,
        };
        let control_box = ControlBox::for_plant(&config);
        Self {
            config,
            state,
            last,
            control_box,
            clamped: 0,
        }
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn measurement(&self) -> &Measurement {
        &self.last
    }

    pub fn control_box(&self) -> &ControlBox {
        &self.control_box
    }

    pub fn clock(&self) -> f64 {
        self.state.clock
    }

    /// Number of commands that had to be clamped into the box.
    pub fn clamp_count(&self) -> usize {
        self.clamped
    }

    /// Clamps `control` into the box and advances one step. Returns the applied control.
    pub fn apply(&mut self, control: &[f64], d: &Disturbance) -> Result<Vec<f64>, PlantError> {
        if control.len() != self.control_box.len() {
            return Err(PlantError::InvalidArgument(format!(
                "expected {} controls, got {}",
                self.control_box.len(),
                control.len()
            )));
        }
        check_finite("control", control)?;
        let applied = self.control_box.clamp(control);
        if applied != control {
            self.clamped += 1;
        }
        let (s, m) = step(&self.state, &applied, d, &self.config)?;
        self.state = s;
        self.last = m;
        Ok(applied)
    }
}

/// Runs `policy` for `steps` steps, recording `(x_t, u_t, d_t)` with `u_t` driving
/// the transition to `x_{t+1}`.
pub fn simulate_episode<P>(
    plant: &mut Plant,
    mut policy: P,
    steps: usize,
    weather: &[Disturbance],
) -> Result<Trajectory, PlantError>
where
    P: FnMut(&Measurement, f64) -> Vec<f64>,
{
    if weather.len() < steps {
        return Err(PlantError::InvalidArgument(format!(
            "weather has {} entries for {steps} steps",
            weather.len()
        )));
    }
    let mut traj = Trajectory::with_capacity(steps);
    for d in weather.iter().take(steps) {
        let m = plant.measurement().clone();
        let clock = plant.clock();
        let control = policy(&m, clock);
        let applied = plant.apply(&control, d)?;
        traj.push(m.state_vector(), applied, d.to_vec(), clock);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calm(t_amb: f64) -> Disturbance {
        Disturbance {
            ambient_temperature: t_amb,
            solar_gain: 0.0,
            occupancy: 0.0,
        }
    }

    #[test]
    fn equilibrium_without_input() {
        let cfg = PlantConfig::single_zone();
        let s = PlantState::initial(&cfg, 20.0);
        let (n, m) = step(&s, &[0.0, 20.0], &calm(20.0), &cfg).unwrap();
        assert_eq!(n.zone_temperatures, vec![20.0]);
        assert_eq!(m.heating_power + m.cooling_power + m.fan_power, 0.0);
    }

    #[test]
    fn forward_euler_by_hand() {
        let mut cfg = PlantConfig::single_zone();
        cfg.capacitance = vec![1e6];
        cfg.ambient_conductance = vec![100.0];
        let s = PlantState::initial(&cfg, 20.0);
        // fan 0 => no HVAC heat regardless of the coil loops
        let (n, _) = step(&s, &[0.0, 20.0], &calm(0.0), &cfg).unwrap();
        assert!((n.zone_temperatures[0] - 18.2).abs() < 1e-12);
    }

    #[test]
    fn saturated_heating_reports_capacity() {
        let mut cfg = PlantConfig::single_zone();
        // heavy zone so the coil stays saturated while the loop settles
        cfg.capacitance = vec![1e10];
        let mut s = PlantState::initial(&cfg, 15.0);
        let mut m = None;
        for _ in 0..20 {
            let (n, meas) = step(&s, &[1.0, 40.0], &calm(-10.0), &cfg).unwrap();
            s = n;
            m = Some(meas);
        }
        assert_eq!(m.unwrap().heating_power, cfg.heating_capacity[0] / 1000.0);
    }

    #[test]
    fn non_finite_input_is_an_error() {
        let cfg = PlantConfig::single_zone();
        let s = PlantState::initial(&cfg, 20.0);
        assert!(matches!(
            step(&s, &[f64::NAN, 20.0], &calm(0.0), &cfg),
            Err(PlantError::NumericDomain(_))
        ));
        assert!(matches!(
            step(&s, &[0.5, 20.0], &calm(f64::INFINITY), &cfg),
            Err(PlantError::NumericDomain(_))
        ));
    }

    #[test]
    fn cooling_and_fan_channels() {
        let cfg = PlantConfig::single_zone();
        let mut s = PlantState::initial(&cfg, 28.0);
        let mut last = None;
        for _ in 0..5 {
            let (n, m) = step(&s, &[0.5, 12.0], &calm(30.0), &cfg).unwrap();
            s = n;
            last = Some(m);
        }
        let m = last.unwrap();
        assert!(m.cooling_power > 0.0);
        assert_eq!(m.heating_power, 0.0);
        assert!((m.fan_power - 0.25 * 0.125).abs() < 1e-15);
    }

    #[test]
    fn five_zone_symmetry() {
        let mut cfg = PlantConfig::five_zone();
        let c = cfg.capacitance[0];
        cfg.capacitance = vec![c; 5];
        cfg.ambient_conductance = vec![200.0; 5];
        cfg.solar_aperture = vec![10.0; 5];
        cfg.max_airflow = vec![1.2; 5];
        cfg.heating_capacity = vec![1.2 * AIR_CP * 15.0; 5];
        let mut s = PlantState::initial(&cfg, 19.0);
        let u: Vec<f64> = [vec![0.6; 5], vec![0.3; 5], vec![0.2, 0.5]].concat();
        for k in 0..50 {
            let d = Disturbance {
                ambient_temperature: -5.0 + k as f64 * 0.1,
                solar_gain: 200.0,
                occupancy: 20.0,
            };
            let (n, _) = step(&s, &u, &d, &cfg).unwrap();
            s = n;
            let t0 = s.zone_temperatures[0];
            assert!(s.zone_temperatures.iter().all(|&t| t == t0));
        }
    }

    #[test]
    fn stability_guard_rejects_stiff_zones() {
        let mut cfg = PlantConfig::single_zone();
        cfg.capacitance = vec![5e4];
        assert!(matches!(cfg.validate(), Err(PlantError::InvalidConfig(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = PlantConfig::five_zone();
        cfg.interzone_conductance[0][4] = 10.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PlantConfig::five_zone();
        cfg.interzone_conductance[1][1] = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PlantConfig::single_zone();
        cfg.floor_area = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PlantConfig::single_zone();
        cfg.zone_count = 3;
        assert!(cfg.validate().is_err());
        assert!(PlantConfig::single_zone().validate().is_ok());
        assert!(PlantConfig::five_zone().validate().is_ok());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = PlantConfig::five_zone();
        let back = PlantConfig::from_json_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert!(PlantConfig::from_json_str("{\"zone_count\": 1}").is_err());
    }

    #[test]
    fn episode_alignment_and_clamping() {
        let cfg = PlantConfig::single_zone();
        let weather = cfg_weather(&cfg);
        let mut plant = Plant::new(cfg, 20.0).unwrap();
        let traj = simulate_episode(&mut plant, |_, _| vec![1.5, 25.0], 10, &weather).unwrap();
        assert_eq!(traj.len(), 10);
        assert!(traj.u.iter().all(|u| u == &vec![1.0, 25.0]));
        assert_eq!(plant.clamp_count(), 10);
        assert_eq!(traj.t[3], 3.0 * 900.0);

        let mut plant = Plant::new(PlantConfig::single_zone(), 20.0).unwrap();
        let empty = simulate_episode(&mut plant, |_, _| vec![0.5, 25.0], 0, &weather).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn episode_needs_enough_weather() {
        let cfg = PlantConfig::single_zone();
        let weather = cfg_weather(&cfg);
        let mut plant = Plant::new(cfg, 20.0).unwrap();
        assert!(simulate_episode(&mut plant, |_, _| vec![0.5, 25.0], 500, &weather).is_err());
    }

    fn cfg_weather(cfg: &PlantConfig) -> Vec<Disturbance> {
        make_weather(&cfg.weather, &cfg.occupancy, 1, 1, cfg.sample_period).unwrap()
    }
}
