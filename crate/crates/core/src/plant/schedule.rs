use serde::{Deserialize, Serialize};

use super::PlantConfig;

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Hour of day in `[0, 24)` for a clock measured from midnight of day 0.
pub fn hour_of_day(clock: f64) -> f64 {
    clock.rem_euclid(SECONDS_PER_DAY) / 3600.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancySchedule {
    pub start_hour: f64,
    pub end_hour: f64,
    /// Persons present while occupied.
    pub headcount: f64,
}

impl OccupancySchedule {
    /// Occupied on the half-open window `[start_hour, end_hour)`.
    pub fn is_occupied(&self, clock: f64) -> bool {
        let h = hour_of_day(clock);
        h >= self.start_hour && h < self.end_hour
    }

    pub fn headcount_at(&self, clock: f64) -> f64 {
        if self.is_occupied(clock) {
            self.headcount
        } else {
            0.0
        }
    }
}

/// Zone temperature band: tight while occupied, wide otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComfortSchedule {
    pub start_hour: f64,
    pub end_hour: f64,
    pub occupied: (f64, f64),
    pub unoccupied: (f64, f64),
}

impl ComfortSchedule {
    pub fn from_occupancy(o: &OccupancySchedule) -> Self {
        Self {
            start_hour: o.start_hour,
            end_hour: o.end_hour,
            occupied: (21.0, 24.0),
            unoccupied: (15.0, 30.0),
        }
    }

    /// A schedule that is occupied around the clock.
    pub fn always_occupied() -> Self {
        Self {
            start_hour: 0.0,
            end_hour: 24.0,
            occupied: (21.0, 24.0),
            unoccupied: (15.0, 30.0),
        }
    }

    pub fn is_occupied(&self, clock: f64) -> bool {
        let h = hour_of_day(clock);
        h >= self.start_hour && h < self.end_hour
    }

    pub fn band(&self, clock: f64) -> (f64, f64) {
        if self.is_occupied(clock) {
            self.occupied
        } else {
            self.unoccupied
        }
    }
}

/// Per-zone comfort bounds `(lower, upper)` in °C at `clock`.
pub fn comfort_bounds(clock: f64, config: &PlantConfig) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = config.comfort().band(clock);
    (vec![lo; config.zone_count], vec![hi; config.zone_count])
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 3600.0;

    #[test]
    fn occupied_band_during_office_hours() {
        let cfg = PlantConfig::single_zone();
        assert_eq!(comfort_bounds(10.0 * H, &cfg), (vec![21.0], vec![24.0]));
    }

    #[test]
    fn unoccupied_band_at_night() {
        let cfg = PlantConfig::single_zone();
        assert_eq!(comfort_bounds(2.0 * H, &cfg), (vec![15.0], vec![30.0]));
        // second day, same hour
        assert_eq!(comfort_bounds(26.0 * H, &cfg), (vec![15.0], vec![30.0]));
    }

    #[test]
    fn window_end_is_exclusive() {
        let cfg = PlantConfig::single_zone();
        assert_eq!(comfort_bounds(18.0 * H, &cfg), (vec![15.0], vec![30.0]));
        assert_eq!(comfort_bounds(8.0 * H, &cfg), (vec![21.0], vec![24.0]));
    }

    #[test]
    fn five_zone_window_runs_six_to_seven() {
        let cfg = PlantConfig::five_zone();
        assert_eq!(comfort_bounds(6.0 * H, &cfg).0, vec![21.0; 5]);
        assert_eq!(comfort_bounds(18.75 * H, &cfg).1, vec![24.0; 5]);
        assert_eq!(comfort_bounds(19.0 * H, &cfg).0, vec![15.0; 5]);
    }

    #[test]
    fn headcount_follows_schedule() {
        let o = PlantConfig::single_zone().occupancy;
        assert_eq!(o.headcount_at(3.0 * H), 0.0);
        assert_eq!(o.headcount_at(12.0 * H), 2.0);
    }
}
