use serde::{Deserialize, Serialize};

use super::{DataError, Trajectory};

/// Z-score statistics of one channel group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels with zero variance; their std is forced to 1.
    pub flagged: Vec<bool>,
}

impl ChannelStats {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
            flagged: vec![false; n],
        }
    }

    pub fn fit<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> Result<Self, DataError> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let rows: Vec<&Vec<f64>> = rows.collect();
        for r in &rows {
            if sum.is_empty() {
                sum = vec![0.0; r.len()];
            }
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
            n += 1;
        }
        if n < 2 {
            return Err(DataError::Invalid(format!(
                "normalizer needs at least 2 samples per channel, got {n}"
            )));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        sq.resize(mean.len(), 0.0);
        for r in &rows {
            for ((q, v), m) in sq.iter_mut().zip(r.iter()).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let mut std = Vec::with_capacity(mean.len());
        let mut flagged = Vec::with_capacity(mean.len());
        for (q, m) in sq.iter().zip(&mean) {
            let s = (q / n as f64).sqrt();
            // relative floor so a channel stuck at a large constant still counts as zero-variance
            let zero = !(s > 1e-12 * m.abs().max(1.0));
            std.push(if zero { 1.0 } else { s });
            flagged.push(zero);
        }
        Ok(Self { mean, std, flagged })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }
}

/// Per-channel statistics of x, u and d, fitted on training trajectories only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub x: ChannelStats,
    pub u: ChannelStats,
    pub d: ChannelStats,
}

impl Normalizer {
    pub fn identity(n_x: usize, n_u: usize, n_d: usize) -> Self {
        Self {
            x: ChannelStats::identity(n_x),
            u: ChannelStats::identity(n_u),
            d: ChannelStats::identity(n_d),
        }
    }

    pub fn fit(trajs: &[Trajectory]) -> Result<Self, DataError> {
        let n = Self {
            x: ChannelStats::fit(trajs.iter().flat_map(|t| t.x.iter()))?,
            u: ChannelStats::fit(trajs.iter().flat_map(|t| t.u.iter()))?,
            d: ChannelStats::fit(trajs.iter().flat_map(|t| t.d.iter()))?,
        };
        for (group, s) in [("x", &n.x), ("u", &n.u), ("d", &n.d)] {
            for (i, f) in s.flagged.iter().enumerate() {
                if *f {
                    log::warn!("channel {group}_{i} has zero variance; std set to 1");
                }
            }
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_traj(seed: u64, len: usize) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tr = Trajectory::default();
        for k in 0..len {
            tr.push(
                vec![rng.random_range(15.0..30.0), rng.random_range(0.0..4.0)],
                vec![rng.random_range(0.0..1.0), 7.0],
                vec![rng.random_range(-10.0..10.0)],
                k as f64,
            );
        }
        tr
    }

    #[test]
    fn constant_channel_is_flagged() {
        let n = Normalizer::fit(&[random_traj(1, 50)]).unwrap();
        assert_eq!(n.u.flagged, vec![false, true]);
        assert_eq!(n.u.std[1], 1.0);
        assert_eq!(n.u.apply(&[0.5, 9.0])[1], 2.0);
    }

    #[test]
    fn round_trip() {
        let n = Normalizer::fit(&[random_traj(2, 80)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let v = vec![rng.random_range(-50.0..50.0), rng.random_range(-5.0..5.0)];
            let back = n.x.invert(&n.x.apply(&v));
            for (a, b) in v.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn normalized_training_mean_is_zero() {
        let tr = random_traj(4, 200);
        let n = Normalizer::fit(std::slice::from_ref(&tr)).unwrap();
        let z: Vec<Vec<f64>> = tr.x.iter().map(|v| n.x.apply(v)).collect();
        for c in 0..2 {
            let m: f64 = z.iter().map(|r| r[c]).sum::<f64>() / z.len() as f64;
            assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn needs_two_samples() {
        assert!(Normalizer::fit(&[random_traj(5, 1)]).is_err());
        assert!(Normalizer::fit(&[]).is_err());
    }
}
