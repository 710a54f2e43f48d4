//! Episode scores: energy per floor area, comfort-band violation, solver timing.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::Trajectory;
use crate::mpc::{Episode, MpcError};
use crate::plant::{ComfortSchedule, PlantConfig, StateLayout};

/// Sample durations in hours from the time stamps: `t[k+1] - t[k]`, with the last
/// sample reusing the previous interval. A single sample has zero duration.
pub fn sample_hours(t: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut dt: Vec<f64> = t.windows(2).map(|w| (w[1] - w[0]) / 3600.0).collect();
    if n >= 2 {
        dt.push(dt[n - 2]);
    } else if n == 1 {
        dt.push(0.0);
    }
    dt
}

fn zone_discomfort(tr: &Trajectory, zones: usize, comfort: &ComfortSchedule, occupied_only: bool) -> f64 {
    if zones == 0 {
        return 0.0;
    }
    let dt = sample_hours(&tr.t);
    let mut total = 0.0;
    for (k, x) in tr.x.iter().enumerate() {
        if occupied_only && !comfort.is_occupied(tr.t[k]) {
            continue;
        }
        let (lo, hi) = comfort.band(tr.t[k]);
        for &temp in &x[..zones] {
            total += (temp - hi).max(lo - temp).max(0.0) * dt[k];
        }
    }
    total / zones as f64
}

/// Band violation in kelvin-hours, averaged over the first `zones` state channels.
///
/// Both the occupied and the wide unoccupied band count.
pub fn discomfort(tr: &Trajectory, zones: usize, comfort: &ComfortSchedule) -> f64 {
    zone_discomfort(tr, zones, comfort, false)
}

/// Like [`discomfort`] but only over occupied samples.
pub fn discomfort_occupied(tr: &Trajectory, zones: usize, comfort: &ComfortSchedule) -> f64 {
    zone_discomfort(tr, zones, comfort, true)
}

/// Energy in kWh per square metre from the power channels (kW).
pub fn energy(tr: &Trajectory, power_channels: &[usize], floor_area: f64) -> Result<f64, MpcError> {
    if !(floor_area > 0.0) {
        return Err(MpcError::Contract("floor area must be positive".into()));
    }
    let dt = sample_hours(&tr.t);
    let kwh: f64 = tr
        .x
        .iter()
        .zip(&dt)
        .map(|(x, h)| power_channels.iter().map(|&c| x[c]).sum::<f64>() * h)
        .sum();
    Ok(kwh / floor_area)
}

/// Mean and max of the solve times in seconds.
pub fn timing(times: &[f64]) -> Result<(f64, f64), MpcError> {
    if times.is_empty() {
        return Err(MpcError::Contract("no solve times".into()));
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((mean, max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    /// kWh/m²
    pub total_power: f64,
    /// Kh, averaged over zones.
    pub discomfort: f64,
    /// Kh over occupied samples only, averaged over zones.
    pub discomfort_occupied: f64,
    /// s
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
    pub violation_steps: usize,
}

impl KpiReport {
    /// Scores an episode run on a plant built from `config`. Baseline episodes
    /// without solver logs get zero timing.
    pub fn from_episode(ep: &Episode, config: &PlantConfig) -> Result<Self, MpcError> {
        let layout = StateLayout::for_plant(config);
        let comfort = config.comfort();
        let power = [layout.heating(), layout.cooling(), layout.fan()];
        let times = ep.solve_times();
        let (mean, max) = if times.is_empty() { (0.0, 0.0) } else { timing(&times)? };
        Ok(Self {
            total_power: energy(&ep.outcome, &power, config.floor_area)?,
            discomfort: discomfort(&ep.outcome, layout.zones, &comfort),
            discomfort_occupied: discomfort_occupied(&ep.outcome, layout.zones, &comfort),
            mean_solve_time: mean,
            max_solve_time: max,
            violation_steps: ep.violation_steps,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}

pub const RESULTS_HEADER: &str = "model,solver,power_kwh_m2,discomfort_kh,mean_s,max_s";

/// Appends one row to a results table, writing the header when the file is new.
pub fn append_results_row(path: impl AsRef<Path>, model: &str, solver: &str, r: &KpiReport) -> std::io::Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{RESULTS_HEADER}")?;
    }
    writeln!(
        f,
        "{model},{solver},{},{},{},{}",
        r.total_power, r.discomfort, r.mean_solve_time, r.max_solve_time
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(temps: &[f64], power: f64, dt: f64, t0: f64) -> Trajectory {
        let mut tr = Trajectory::default();
        for (k, &temp) in temps.iter().enumerate() {
            tr.push(vec![temp, power, 0.0, 0.0], vec![0.0, 0.0], vec![0.0; 3], t0 + k as f64 * dt);
        }
        tr
    }

    #[test]
    fn discomfort_examples() {
        let c = ComfortSchedule::always_occupied();
        // eight 15-minute samples = 2 h
        let hot = log(&[25.0; 8], 0.0, 900.0, 0.0);
        assert!((discomfort(&hot, 1, &c) - 2.0).abs() < 1e-12);
        let cold = log(&[20.0; 2], 0.0, 900.0, 0.0);
        assert!((discomfort(&cold, 1, &c) - 0.5).abs() < 1e-12);
        let ok = log(&[21.0, 22.5, 24.0], 0.0, 900.0, 0.0);
        assert_eq!(discomfort(&ok, 1, &c), 0.0);
    }

    #[test]
    fn unoccupied_band_applies_at_night() {
        let c = ComfortSchedule::from_occupancy(&PlantConfig::single_zone().occupancy);
        let night = log(&[16.0; 4], 0.0, 900.0, 2.0 * 3600.0);
        assert_eq!(discomfort(&night, 1, &c), 0.0);
        let freezing = log(&[14.0; 4], 0.0, 900.0, 2.0 * 3600.0);
        assert!((discomfort(&freezing, 1, &c) - 1.0).abs() < 1e-12);
        assert_eq!(discomfort_occupied(&freezing, 1, &c), 0.0);
    }

    #[test]
    fn discomfort_averages_zones() {
        let c = ComfortSchedule::always_occupied();
        let mut tr = Trajectory::default();
        for k in 0..4 {
            tr.push(vec![25.0, 22.0, 0.0, 0.0, 0.0], vec![0.0], vec![0.0; 3], k as f64 * 1800.0);
        }
        assert!((discomfort(&tr, 2, &c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_examples_and_additivity() {
        // 2 kW for 3 h over 50 m²
        let tr = log(&[22.0; 12], 2.0, 900.0, 0.0);
        let e = energy(&tr, &[1, 2, 3], 50.0).unwrap();
        assert!((e - 0.12).abs() < 1e-12, "{e}");
        assert_eq!(energy(&log(&[22.0; 5], 0.0, 900.0, 0.0), &[1, 2, 3], 50.0).unwrap(), 0.0);
        let a = tr.slice(0, 6);
        let b = tr.slice(6, 12);
        let sum = energy(&a, &[1], 50.0).unwrap() + energy(&b, &[1], 50.0).unwrap();
        assert!((sum - e).abs() < 1e-12);
        assert!(energy(&tr, &[1], 0.0).is_err());
    }

    #[test]
    fn intervals_come_from_time_stamps() {
        assert_eq!(sample_hours(&[0.0, 1800.0, 5400.0]), vec![0.5, 1.0, 1.0]);
        assert_eq!(sample_hours(&[7.0]), vec![0.0]);
        assert!(sample_hours(&[]).is_empty());
    }

    #[test]
    fn timing_examples() {
        assert_eq!(timing(&[1.0, 3.0]).unwrap(), (2.0, 3.0));
        assert_eq!(timing(&[0.25]).unwrap(), (0.25, 0.25));
        assert_eq!(timing(&[3.0, 1.0]).unwrap().0, timing(&[1.0, 3.0]).unwrap().0);
        assert!(timing(&[]).is_err());
    }

    #[test]
    fn results_rows_append_under_one_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("results.csv");
        let r = KpiReport {
            total_power: 0.5,
            discomfort: 1.0,
            discomfort_occupied: 0.5,
            mean_solve_time: 0.1,
            max_solve_time: 0.2,
            violation_steps: 0,
        };
        append_results_row(&p, "mlp", "sqp", &r).unwrap();
        append_results_row(&p, "lstm", "gdm", &r).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines, vec![RESULTS_HEADER, "mlp,sqp,0.5,1,0.1,0.2", "lstm,gdm,0.5,1,0.1,0.2"]);
        let back: KpiReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
