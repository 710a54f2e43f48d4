use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Dims, Trajectory};

/// Lag orders. A lag of `M` means the window holds `M + 1` entries ending at `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LagSpec {
    pub x: usize,
    pub u: usize,
    pub d: usize,
}

impl LagSpec {
    pub const fn new(x: usize, u: usize, d: usize) -> Self {
        Self { x, u, d }
    }

    pub fn max(&self) -> usize {
        self.x.max(self.u).max(self.d)
    }

    pub fn input_width(&self, dims: Dims) -> usize {
        (self.x + 1) * dims.n_x + (self.u + 1) * dims.n_u + (self.d + 1) * dims.n_d
    }
}

impl fmt::Display for LagSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.x, self.u, self.d)
    }
}

impl FromStr for LagSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected Mx,Mu,Md, got {s:?}"));
        }
        let p = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(Self::new(p(parts[0])?, p(parts[1])?, p(parts[2])?))
    }
}

/// One-step supervised pairs built from lag windows.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub lags: Option<LagSpec>,
    pub dims: Option<Dims>,
    /// `[x_{t-Mx}..x_t, u_{t-Mu}..u_t, d_{t-Md}..d_t]`, raw units.
    pub inputs: Vec<Vec<f64>>,
    /// `x_{t+1}`, raw units.
    pub targets: Vec<Vec<f64>>,
    /// `(trajectory id, t)` of every sample.
    pub provenance: Vec<(usize, usize)>,
    /// Source trajectories, kept for multi-step evaluation.
    pub trajectories: Vec<Trajectory>,
    /// Trajectories too short to yield a sample.
    pub skipped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn from_trajectories(trajs: &[Trajectory], lags: LagSpec) -> Self {
        let mut out = Dataset {
            lags: Some(lags),
            dims: trajs.iter().find_map(Trajectory::dims),
            ..Default::default()
        };
        for tr in trajs {
            let part = window(tr, lags);
            out.inputs.extend(part.inputs);
            out.targets.extend(part.targets);
            out.provenance.extend(part.provenance);
            out.skipped += part.skipped;
            out.trajectories.push(tr.clone());
        }
        out
    }
}

/// Concatenates the lag windows ending at `t`.
pub fn window_at(tr: &Trajectory, lags: LagSpec, t: usize) -> Vec<f64> {
    let mut v = Vec::new();
    for k in t - lags.x..=t {
        v.extend_from_slice(&tr.x[k]);
    }
    for k in t - lags.u..=t {
        v.extend_from_slice(&tr.u[k]);
    }
    for k in t - lags.d..=t {
        v.extend_from_slice(&tr.d[k]);
    }
    v
}

/// One sample per `t` in `[max lag, len - 2]`.
pub fn window(tr: &Trajectory, lags: LagSpec) -> Dataset {
    let m = lags.max();
    let mut ds = Dataset {
        lags: Some(lags),
        dims: tr.dims(),
        ..Default::default()
    };
    if tr.len() < m + 2 {
        log::warn!(
            "trajectory {} has {} records, lags {lags} need at least {}",
            tr.id,
            tr.len(),
            m + 2
        );
        ds.skipped = 1;
        return ds;
    }
    for t in m..=tr.len() - 2 {
        ds.inputs.push(window_at(tr, lags, t));
        ds.targets.push(tr.x[t + 1].clone());
        ds.provenance.push((tr.id, t));
    }
    ds.trajectories.push(tr.clone());
    ds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counting(len: usize) -> Trajectory {
        let mut tr = Trajectory::default();
        for k in 0..len {
            let v = k as f64;
            tr.push(vec![v, 100.0 + v], vec![-v], vec![1000.0 + v], v * 900.0);
        }
        tr
    }

    /// Independent enumeration of admissible start indices.
    fn enumerate_starts(len: usize, lags: LagSpec) -> Vec<usize> {
        (0..len)
            .filter(|&t| t >= lags.x && t >= lags.u && t >= lags.d && t + 1 < len)
            .collect()
    }

    #[test]
    fn sample_indices_match_enumeration() {
        let lags = LagSpec::new(1, 5, 5);
        let ds = window(&counting(10), lags);
        let ts: Vec<usize> = ds.provenance.iter().map(|p| p.1).collect();
        assert_eq!(ts, enumerate_starts(10, lags));
        assert_eq!(ts, vec![5, 6, 7, 8]);
    }

    #[test]
    fn zero_lags_use_current_step() {
        let ds = window(&counting(3), LagSpec::new(0, 0, 0));
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn unit_lags_unrolled() {
        let tr = counting(4);
        let ds = window(&tr, LagSpec::new(1, 1, 1));
        assert_eq!(ds.provenance[0], (0, 1));
        assert_eq!(
            ds.inputs[0],
            vec![0.0, 100.0, 1.0, 101.0, -0.0, -1.0, 1000.0, 1001.0]
        );
        assert_eq!(ds.targets[0], vec![2.0, 102.0]);
    }

    #[test]
    fn width_formula() {
        let lags = LagSpec::new(2, 1, 3);
        let ds = window(&counting(12), lags);
        let dims = ds.dims.unwrap();
        assert!(ds.inputs.iter().all(|v| v.len() == lags.input_width(dims)));
        assert_eq!(lags.input_width(dims), 3 * 2 + 2 + 4);
    }

    #[test]
    fn too_short_is_empty() {
        let ds = window(&counting(6), LagSpec::new(1, 5, 5));
        assert!(ds.is_empty());
        assert_eq!(ds.skipped, 1);
    }

    #[test]
    fn parse_lags() {
        assert_eq!("1,5,5".parse::<LagSpec>().unwrap(), LagSpec::new(1, 5, 5));
        assert!("1,5".parse::<LagSpec>().is_err());
        assert!("a,1,1".parse::<LagSpec>().is_err());
        assert_eq!(LagSpec::new(1, 5, 5).to_string(), "1,5,5");
    }
}
