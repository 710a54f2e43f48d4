use crate::dataio::{LagSpec, Normalizer, Trajectory};
use crate::diff::{Tape, Tensor, Var};

use super::{History, SurrogateError, SurrogateModel};

/// Multi-step error averaged over channels, steps and start points, z-space.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mse: f64,
    /// Error per horizon step, averaged over starts and channels.
    pub per_step: Vec<f64>,
    pub starts: usize,
    /// Trajectories too short for `lags + horizon`.
    pub skipped: usize,
    pub horizon: usize,
}

/// Start indices `t` with a full history behind and `horizon` true states ahead.
pub fn admissible_starts(len: usize, lags: LagSpec, horizon: usize) -> Vec<usize> {
    let m = lags.max();
    if len < m + horizon + 1 {
        return Vec::new();
    }
    (m..len - horizon).collect()
}

/// Scores an arbitrary predictor. `predict(traj, starts, horizon)` returns, per start,
/// the raw predicted `x_{t+1..t+horizon}` given the true controls and disturbances.
pub fn evaluate_with<F>(
    predict: F,
    trajectories: &[Trajectory],
    lags: LagSpec,
    normalizer: &Normalizer,
    horizon: usize,
) -> Result<EvalReport, SurrogateError>
where
    F: Fn(&Trajectory, &[usize], usize) -> Result<Vec<Vec<Vec<f64>>>, SurrogateError>,
{
    if horizon == 0 {
        return Err(SurrogateError::Contract("evaluation horizon must be at least 1".into()));
    }
    let mut per_step = vec![0.0; horizon];
    let mut starts = 0usize;
    let mut skipped = 0usize;
    let mut channels = 0usize;
    for tr in trajectories {
        let ts = admissible_starts(tr.len(), lags, horizon);
        if ts.is_empty() {
            skipped += 1;
            continue;
        }
        let preds = predict(tr, &ts, horizon)?;
        if preds.len() != ts.len() {
            return Err(SurrogateError::Shape(format!(
                "predictor returned {} rollouts for {} starts",
                preds.len(),
                ts.len()
            )));
        }
        for (&t, pred) in ts.iter().zip(&preds) {
            for (k, p) in pred.iter().enumerate().take(horizon) {
                let zp = normalizer.x.apply(p);
                let zt = normalizer.x.apply(&tr.x[t + 1 + k]);
                channels = zp.len();
                per_step[k] += zp.iter().zip(&zt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        starts += ts.len();
    }
    if skipped > 0 {
        log::warn!("{skipped} trajectories too short for lags {lags} and horizon {horizon}");
    }
    if starts == 0 {
        return Err(SurrogateError::Contract(format!(
            "no trajectory is long enough for lags {lags} and horizon {horizon}"
        )));
    }
    let denom = (starts * channels.max(1)) as f64;
    for v in &mut per_step {
        *v /= denom;
    }
    let mse = per_step.iter().sum::<f64>() / horizon as f64;
    Ok(EvalReport {
        mse,
        per_step,
        starts,
        skipped,
        horizon,
    })
}

impl SurrogateModel {
    /// Batched rollouts from each `t` in `starts` with the recorded controls and disturbances.
    pub fn rollout_starts(
        &self,
        tr: &Trajectory,
        starts: &[usize],
        horizon: usize,
    ) -> Result<Vec<Vec<Vec<f64>>>, SurrogateError> {
        const CHUNK: usize = 128;
        let mut out = Vec::with_capacity(starts.len());
        for chunk in starts.chunks(CHUNK) {
            let hist: Vec<History> = chunk
                .iter()
                .map(|&t| History::from_trajectory(tr, self.lags, t))
                .collect();
            let refs: Vec<&History> = hist.iter().collect();
            let mut tape = Tape::new();
            let p = self.params_on(&mut tape, false);
            let hv = History::batch_on(&mut tape, &refs)?;
            let mut cs: Vec<Var> = Vec::with_capacity(horizon);
            let mut ds: Vec<Var> = Vec::with_capacity(horizon);
            for k in 0..horizon {
                let u: Vec<Vec<f64>> = chunk.iter().map(|&t| tr.u[t + k].clone()).collect();
                let d: Vec<Vec<f64>> = chunk.iter().map(|&t| tr.d[t + k].clone()).collect();
                cs.push(tape.constant(Tensor::from_rows(&u)?));
                ds.push(tape.constant(Tensor::from_rows(&d)?));
            }
            let ys = self.rollout_on(&mut tape, &p, &hv, &cs, &ds)?;
            for b in 0..chunk.len() {
                out.push(ys.iter().map(|&y| tape.value(y).row_slice(b).to_vec()).collect());
            }
        }
        Ok(out)
    }
}

/// Held-out multi-step error of a surrogate.
pub fn evaluate(model: &SurrogateModel, trajectories: &[Trajectory], horizon: usize) -> Result<EvalReport, SurrogateError> {
    evaluate_with(
        |tr, starts, h| model.rollout_starts(tr, starts, h),
        trajectories,
        model.lags,
        &model.normalizer,
        horizon,
    )
}
