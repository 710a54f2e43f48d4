//! Synthetic weather and occupancy sequences.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::schedule::{hour_of_day, OccupancySchedule};
use super::{Disturbance, PlantError};

/// Shape of the synthetic climate.
///
/// ambient = mean - seasonal_amplitude*cos(2pi (day - coldest_day)/365)
///           - diurnal_amplitude*cos(2pi (hour - 3)/24) + N(0, noise_sigma²)
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeatherSpec {
    pub mean: f64,
    pub seasonal_amplitude: f64,
    pub diurnal_amplitude: f64,
    pub noise_sigma: f64,
    /// Peak global irradiance, W/m².
    pub solar_peak: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub coldest_day: f64,
    /// Day of year at clock zero.
    pub start_day: f64,
}

impl WeatherSpec {
    pub fn denver() -> Self {
        Self {
            mean: 10.0,
            seasonal_amplitude: 11.0,
            diurnal_amplitude: 8.0,
            noise_sigma: 1.0,
            solar_peak: 600.0,
            sunrise_hour: 6.0,
            sunset_hour: 18.0,
            coldest_day: 20.0,
            start_day: 20.0,
        }
    }

    pub fn chicago() -> Self {
        Self {
            mean: 10.0,
            seasonal_amplitude: 14.0,
            diurnal_amplitude: 6.0,
            noise_sigma: 1.0,
            solar_peak: 500.0,
            sunrise_hour: 6.5,
            sunset_hour: 17.5,
            coldest_day: 20.0,
            start_day: 20.0,
        }
    }

    fn deterministic_ambient(&self, clock: f64) -> f64 {
        let day = self.start_day + clock / 86_400.0;
        let h = hour_of_day(clock);
        self.mean
            - self.seasonal_amplitude * (2.0 * PI * (day - self.coldest_day) / 365.0).cos()
            - self.diurnal_amplitude * (2.0 * PI * (h - 3.0) / 24.0).cos()
    }

    fn solar(&self, clock: f64) -> f64 {
        let h = hour_of_day(clock);
        let span = self.sunset_hour - self.sunrise_hour;
        if span <= 0.0 {
            return 0.0;
        }
        if !(self.sunrise_hour..=self.sunset_hour).contains(&h) {
            return 0.0;
        }
        (PI * (h - self.sunrise_hour) / span).sin().max(0.0) * self.solar_peak
    }
}

/// `days * 86400 / sample_period` disturbance vectors starting at midnight.
pub fn make_weather(
    spec: &WeatherSpec,
    occupancy: &OccupancySchedule,
    seed: u64,
    days: usize,
    sample_period: f64,
) -> Result<Vec<Disturbance>, PlantError> {
    if days == 0 {
        return Err(PlantError::InvalidArgument("days must be at least 1".into()));
    }
    if !(sample_period > 0.0) {
        return Err(PlantError::InvalidArgument("sample_period must be positive".into()));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(PlantError::InvalidArgument("noise_sigma must be nonnegative".into()));
    }
    let n = (days as f64 * 86_400.0 / sample_period).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| PlantError::InvalidArgument(e.to_string()))?;
    Ok((0..n)
        .map(|k| {
            let clock = k as f64 * sample_period;
            Disturbance {
                ambient_temperature: spec.deterministic_ambient(clock) + noise.sample(&mut rng),
                solar_gain: spec.solar(clock),
                occupancy: occupancy.headcount_at(clock),
            }
        })
        .collect())
}

/// Reads `t_sec,ambient_c,solar_wm2,occupancy`.
pub fn load_weather_csv(path: impl AsRef<Path>) -> Result<Vec<Disturbance>, PlantError> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| PlantError::InvalidArgument(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| PlantError::InvalidArgument(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != ["t_sec", "ambient_c", "solar_wm2", "occupancy"] {
        return Err(PlantError::InvalidArgument(format!(
            "weather header must be t_sec,ambient_c,solar_wm2,occupancy, got {}",
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| PlantError::InvalidArgument(format!("line {line}: {e}")))?;
        let num = |k: usize| -> Result<f64, PlantError> {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| PlantError::InvalidArgument(format!("line {line}: bad field {k}")))
        };
        let d = Disturbance {
            ambient_temperature: num(1)?,
            solar_gain: num(2)?,
            occupancy: num(3)?,
        };
        if d.solar_gain < 0.0 || d.occupancy < 0.0 {
            return Err(PlantError::InvalidArgument(format!(
                "line {line}: solar and occupancy must be nonnegative"
            )));
        }
        out.push(d);
    }
    Ok(out)
}

pub fn save_weather_csv(
    path: impl AsRef<Path>,
    weather: &[Disturbance],
    sample_period: f64,
) -> Result<(), PlantError> {
    let io = |e: csv::Error| PlantError::InvalidArgument(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["t_sec", "ambient_c", "solar_wm2", "occupancy"]).map_err(io)?;
    for (k, d) in weather.iter().enumerate() {
        w.write_record([
            (k as f64 * sample_period).to_string(),
            d.ambient_temperature.to_string(),
            d.solar_gain.to_string(),
            d.occupancy.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| PlantError::InvalidArgument(e.to_string()))?;
    Ok(())
}
