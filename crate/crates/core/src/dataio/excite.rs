use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::plant::{make_weather, simulate_episode, ControlBox, Plant, PlantConfig, PlantError};

use super::Trajectory;

/// Steps run with random inputs before recording so the low-level loops are not at rest.
pub const WARMUP_STEPS: usize = 4;

/// SplitMix64 finalizer, used to derive independent per-trajectory seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `u` uniformly from the control box at every step.
///
/// Each seed picks its own day of year, initial zone temperature and weather noise.
pub fn excite(config: &PlantConfig, seed: u64, steps: usize) -> Result<Trajectory, PlantError> {
    if steps == 0 {
        return Err(PlantError::InvalidArgument("steps must be at least 1".into()));
    }
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = config.clone();
    cfg.weather.start_day = rng.random_range(0.0..365.0);
    let t0 = rng.random_range(15.0..28.0);
    let total = steps + WARMUP_STEPS;
    let days = (total as f64 * cfg.sample_period / 86_400.0).ceil() as usize + 1;
    let weather = make_weather(&cfg.weather, &cfg.occupancy, rng.random(), days, cfg.sample_period)?;
    let bx = ControlBox::for_plant(&cfg);
    let mut plant = Plant::new(cfg, t0)?;
    let policy = |_: &_, _: f64| -> Vec<f64> {
        bx.lower
            .iter()
            .zip(&bx.upper)
            .map(|(&lo, &hi)| rng.random_range(lo..=hi))
            .collect()
    };
    let full = simulate_episode(&mut plant, policy, total, &weather)?;
    Ok(full.slice(WARMUP_STEPS, total))
}

/// `k` excitation trajectories with ids `0..k`, generated in parallel.
pub fn generate(
    config: &PlantConfig,
    k: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, PlantError> {
    (0..k)
        .into_par_iter()
        .map(|id| {
            let mut tr = excite(config, mix_seed(seed, id as u64), steps)?;
            tr.id = id;
            Ok(tr)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controls_stay_in_box() {
        let cfg = PlantConfig::five_zone();
        let tr = excite(&cfg, 11, 60).unwrap();
        let bx = ControlBox::for_plant(&cfg);
        assert_eq!(tr.len(), 60);
        assert!(tr.u.iter().all(|u| bx.contains(u)));
        tr.validate().unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = PlantConfig::single_zone();
        assert_eq!(excite(&cfg, 3, 30).unwrap(), excite(&cfg, 3, 30).unwrap());
        assert_ne!(excite(&cfg, 3, 30).unwrap(), excite(&cfg, 4, 30).unwrap());
    }

    #[test]
    fn coverage_reaches_box_edges() {
        let cfg = PlantConfig::single_zone();
        let tr = excite(&cfg, 5, 1200).unwrap();
        let bx = ControlBox::for_plant(&cfg);
        for c in 0..bx.len() {
            let w = bx.upper[c] - bx.lower[c];
            let lo = tr.u.iter().map(|u| u[c]).fold(f64::INFINITY, f64::min);
            let hi = tr.u.iter().map(|u| u[c]).fold(f64::NEG_INFINITY, f64::max);
            assert!(lo - bx.lower[c] <= 0.05 * w);
            assert!(bx.upper[c] - hi <= 0.05 * w);
        }
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(excite(&PlantConfig::single_zone(), 1, 0).is_err());
    }

    #[test]
    fn parallel_generation_is_reproducible() {
        let cfg = PlantConfig::single_zone();
        let a = generate(&cfg, 4, 20, 9).unwrap();
        let b = generate(&cfg, 4, 20, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|t| t.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_ne!(a[0].x, a[1].x);
    }
}
