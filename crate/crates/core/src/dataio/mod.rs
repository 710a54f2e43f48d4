//! Excitation data, lag windows, normalization, splits and CSV persistence.

mod csvio;
mod excite;
mod normalize;
mod trajectory;
mod window;

pub use csvio::{load_trajectories, save_trajectories};
pub use excite::{excite, generate, mix_seed, WARMUP_STEPS};
pub use normalize::{ChannelStats, Normalizer};
pub use trajectory::{Dims, Trajectory};
pub use window::{window, window_at, Dataset, LagSpec};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid data: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Trajectory ids per split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitManifest {
    /// Validation and test each get `round(k / 12)` trajectories (at least one), the
    /// rest train. The last ids go to test, the ones before to validation.
    pub fn for_count(k: usize) -> Result<Self, DataError> {
        if k < 3 {
            return Err(DataError::Invalid(format!("need at least 3 trajectories to split, got {k}")));
        }
        let held = ((k as f64 / 12.0).round() as usize).max(1);
        let n_train = k - 2 * held;
        Ok(Self {
            train: (0..n_train).collect(),
            val: (n_train..n_train + held).collect(),
            test: (n_train + held..k).collect(),
        })
    }

    pub fn select<'a>(&self, ids: &[usize], trajs: &'a [Trajectory]) -> Vec<&'a Trajectory> {
        trajs.iter().filter(|t| ids.contains(&t.id)).collect()
    }

    /// `(train, val, test)` trajectory copies.
    pub fn partition(&self, trajs: &[Trajectory]) -> (Vec<Trajectory>, Vec<Trajectory>, Vec<Trajectory>) {
        let pick = |ids: &[usize]| self.select(ids, trajs).into_iter().cloned().collect();
        (pick(&self.train), pick(&self.val), pick(&self.test))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let s = serde_json::to_string_pretty(self).map_err(|e| DataError::io(path, e))?;
        std::fs::write(path, s).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| DataError::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_sizes() {
        for (k, n) in [(120, (100, 10, 10)), (600, (500, 50, 50)), (20, (16, 2, 2)), (3, (1, 1, 1))] {
            let s = SplitManifest::for_count(k).unwrap();
            assert_eq!((s.train.len(), s.val.len(), s.test.len()), n, "k = {k}");
        }
        assert!(SplitManifest::for_count(2).is_err());
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let s = SplitManifest::for_count(37).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("split.json");
        let s = SplitManifest::for_count(120).unwrap();
        s.save(&p).unwrap();
        assert_eq!(SplitManifest::load(&p).unwrap(), s);
    }
}
