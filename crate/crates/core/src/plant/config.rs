use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::{ComfortSchedule, OccupancySchedule};
use super::weather::WeatherSpec;
use super::PlantError;

/// Specific heat of air, J/(kg K).
pub const AIR_CP: f64 = 1005.0;

/// Proportional and integral gain of one low-level loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopGains {
    /// Coil valves tracking the supply-air temperature setpoint (per kelvin of error).
    pub supply: PiGains,
    /// Terminal-box airflow loops (five-zone only).
    pub airflow: PiGains,
    /// Reheat valve loops (five-zone only).
    pub reheat: PiGains,
}

/// Central air handler of the five-zone VAV system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralUnit {
    /// Heating coil capacity at full airflow, W.
    pub heating_capacity: f64,
    /// Cooling coil capacity at full airflow, W.
    pub cooling_capacity: f64,
    /// Fraction of outdoor air in the mixed air stream.
    pub outdoor_air_fraction: f64,
    /// Supply setpoint at `yHea = yCoo` (°C) and its swing per unit of `yHea - yCoo`.
    pub setpoint_center: f64,
    pub setpoint_span: f64,
}

/// Parameters of the synthetic building.
///
/// Zone `i` follows `C_i dT_i/dt = UA_i (T_amb - T_i) + sum_j G_ij (T_j - T_i) + Q_hvac + Q_solar + Q_occ`,
/// integrated with forward Euler at `sample_period`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    /// 1 (fan-coil room) or 5 (four perimeter zones plus core, core last).
    pub zone_count: usize,
    /// J/K per zone.
    pub capacitance: Vec<f64>,
    /// Zone-to-ambient conductance, W/K per zone.
    pub ambient_conductance: Vec<f64>,
    /// Symmetric zone-to-zone conductance, W/K, zero diagonal.
    pub interzone_conductance: Vec<Vec<f64>>,
    /// Single-zone: heating coil capacity. Five-zone: reheat coil capacity per zone. W.
    pub heating_capacity: Vec<f64>,
    /// Single-zone: cooling coil capacity. Five-zone: unused (cooling is central). W.
    pub cooling_capacity: Vec<f64>,
    /// Design airflow per zone, kg/s.
    pub max_airflow: Vec<f64>,
    /// Fan power at full speed (single-zone) or full total airflow (five-zone), W.
    pub fan_power_coefficient: f64,
    /// Effective solar aperture per zone, m².
    pub solar_aperture: Vec<f64>,
    pub floor_area: f64,
    pub pi_gains: LoopGains,
    pub central: Option<CentralUnit>,
    /// Seconds per control step.
    pub sample_period: f64,
    pub occupancy: OccupancySchedule,
    pub weather: WeatherSpec,
    pub seed: u64,
}

impl PlantConfig {
    /// Single room with a four-pipe fan coil unit, 6 m x 8 m floor, two occupants 8:00-18:00.
    pub fn single_zone() -> Self {
        Self {
            zone_count: 1,
            capacitance: vec![8.0e6],
            ambient_conductance: vec![60.0],
            interzone_conductance: vec![vec![0.0]],
            heating_capacity: vec![8000.0],
            cooling_capacity: vec![6000.0],
            max_airflow: vec![8000.0 / (20.0 * AIR_CP)],
            fan_power_coefficient: 250.0,
            solar_aperture: vec![3.0],
            floor_area: 48.0,
            pi_gains: LoopGains {
                supply: PiGains { kp: 0.005, ki: 0.045 },
                airflow: PiGains { kp: 0.05, ki: 0.45 },
                reheat: PiGains { kp: 0.05, ki: 0.45 },
            },
            central: None,
            sample_period: 900.0,
            occupancy: OccupancySchedule {
                start_hour: 8.0,
                end_hour: 18.0,
                headcount: 2.0,
            },
            weather: WeatherSpec::denver(),
            seed: 0,
        }
    }

    /// Office floor with four perimeter zones and a core zone on a single-duct VAV
    /// system with reheat, occupied 6:00-19:00.
    pub fn five_zone() -> Self {
        let perim_c = 3.0e7;
        let core_c = 1.0e8;
        let g = 400.0;
        let mut inter = vec![vec![0.0; 5]; 5];
        for i in 0..4 {
            inter[i][4] = g;
            inter[4][i] = g;
        }
        let flow = vec![1.2, 1.2, 1.2, 1.2, 3.0];
        let reheat: Vec<f64> = flow.iter().map(|f| f * AIR_CP * 15.0).collect();
        let total_flow: f64 = flow.iter().sum();
        Self {
            zone_count: 5,
            capacitance: vec![perim_c, perim_c, perim_c, perim_c, core_c],
            ambient_conductance: vec![250.0, 250.0, 250.0, 250.0, 50.0],
            interzone_conductance: inter,
            heating_capacity: reheat,
            cooling_capacity: vec![0.0; 5],
            max_airflow: flow,
            fan_power_coefficient: 12_000.0,
            solar_aperture: vec![12.0, 8.0, 12.0, 8.0, 0.0],
            floor_area: 1600.0,
            pi_gains: LoopGains {
                supply: PiGains { kp: 0.005, ki: 0.045 },
                airflow: PiGains { kp: 0.05, ki: 0.45 },
                reheat: PiGains { kp: 0.05, ki: 0.45 },
            },
            central: Some(CentralUnit {
                heating_capacity: total_flow * AIR_CP * 20.0,
                cooling_capacity: total_flow * AIR_CP * 25.0,
                outdoor_air_fraction: 0.3,
                setpoint_center: 12.5,
                setpoint_span: 7.5,
            }),
            sample_period: 900.0,
            occupancy: OccupancySchedule {
                start_hour: 6.0,
                end_hour: 19.0,
                headcount: 60.0,
            },
            weather: WeatherSpec::chicago(),
            seed: 0,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, PlantError> {
        let cfg: Self =
            serde_json::from_str(s).map_err(|e| PlantError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlantError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)
            .map_err(|e| PlantError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plant config serializes")
    }

    pub fn is_multizone(&self) -> bool {
        self.zone_count == 5
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |m: String| Err(PlantError::InvalidConfig(m));
        let n = self.zone_count;
        if n != 1 && n != 5 {
            return bad(format!("zone_count must be 1 or 5, got {n}"));
        }
        for (name, len) in [
            ("capacitance", self.capacitance.len()),
            ("ambient_conductance", self.ambient_conductance.len()),
            ("interzone_conductance", self.interzone_conductance.len()),
            ("heating_capacity", self.heating_capacity.len()),
            ("cooling_capacity", self.cooling_capacity.len()),
            ("max_airflow", self.max_airflow.len()),
            ("solar_aperture", self.solar_aperture.len()),
        ] {
            if len != n {
                return bad(format!("{name} has {len} entries, expected {n}"));
            }
        }
        if !(self.sample_period > 0.0) {
            return bad("sample_period must be positive".into());
        }
        if !(self.floor_area > 0.0) {
            return bad("floor_area must be positive".into());
        }
        if self.capacitance.iter().any(|&c| !(c > 0.0)) {
            return bad("capacitances must be positive".into());
        }
        if self.ambient_conductance.iter().any(|&g| !(g >= 0.0)) {
            return bad("conductances must be nonnegative".into());
        }
        for (i, row) in self.interzone_conductance.iter().enumerate() {
            if row.len() != n {
                return bad(format!("interzone_conductance row {i} has {} entries", row.len()));
            }
            if row[i] != 0.0 {
                return bad(format!("interzone_conductance[{i}][{i}] must be zero"));
            }
            for (j, &g) in row.iter().enumerate() {
                if !(g >= 0.0) {
                    return bad("conductances must be nonnegative".into());
                }
                if g != self.interzone_conductance[j][i] {
                    return bad(format!("interzone_conductance not symmetric at ({i}, {j})"));
                }
            }
        }
        let caps = self
            .heating_capacity
            .iter()
            .chain(&self.cooling_capacity)
            .chain(&self.max_airflow)
            .chain(&self.solar_aperture);
        if caps.into_iter().any(|&v| !(v >= 0.0)) {
            return bad("capacities, airflows and apertures must be nonnegative".into());
        }
        if self.max_airflow.iter().any(|&v| v <= 0.0) {
            return bad("max_airflow must be positive".into());
        }
        if self.is_multizone() && self.central.is_none() {
            return bad("five-zone plant needs a central unit".into());
        }
        let o = &self.occupancy;
        if !(0.0..=24.0).contains(&o.start_hour) || !(0.0..=24.0).contains(&o.end_hour) {
            return bad("occupied hours must lie in [0, 24]".into());
        }
        if o.headcount < 0.0 {
            return bad("headcount must be nonnegative".into());
        }
        for i in 0..n {
            let total: f64 = self.ambient_conductance[i] + self.interzone_conductance[i].iter().sum::<f64>();
            let ratio = self.sample_period * total / self.capacitance[i];
            if ratio >= 1.0 {
                return bad(format!(
                    "zone {i}: dt*(UA+sum G)/C = {ratio:.3} must stay below 1 for a stable Euler step"
                ));
            }
        }
        Ok(())
    }

    /// Upper bound of the heating power channel, W.
    pub fn heating_capacity_total(&self) -> f64 {
        self.heating_capacity.iter().sum::<f64>()
            + self.central.as_ref().map_or(0.0, |c| c.heating_capacity)
    }

    /// Upper bound of the cooling power channel, W.
    pub fn cooling_capacity_total(&self) -> f64 {
        self.cooling_capacity.iter().sum::<f64>()
            + self.central.as_ref().map_or(0.0, |c| c.cooling_capacity)
    }

    pub fn comfort(&self) -> ComfortSchedule {
        ComfortSchedule::from_occupancy(&self.occupancy)
    }
}
