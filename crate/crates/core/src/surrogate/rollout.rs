use std::collections::VecDeque;

use crate::dataio::{ChannelStats, LagSpec, Trajectory};
use crate::diff::{Tape, Tensor, Var};

use super::{LstmRollout, ModelKind, SurrogateError, SurrogateModel};

/// Past values needed before the first planned control, raw units, oldest first:
/// `x_{t-Mx..t}`, `u_{t-Mu..t-1}`, `d_{t-Md..t-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

impl History {
    /// History ending at record `t` of `tr`. Needs `t >= max lag`.
    pub fn from_trajectory(tr: &Trajectory, lags: LagSpec, t: usize) -> Self {
        Self {
            x: tr.x[t - lags.x..=t].to_vec(),
            u: tr.u[t - lags.u..t].to_vec(),
            d: tr.d[t - lags.d..t].to_vec(),
        }
    }

    pub fn check(&self, lags: LagSpec) -> Result<(), SurrogateError> {
        if self.x.len() != lags.x + 1 || self.u.len() != lags.u || self.d.len() != lags.d {
            return Err(SurrogateError::Shape(format!(
                "history holds {}/{}/{} entries, lags {lags} need {}/{}/{}",
                self.x.len(),
                self.u.len(),
                self.d.len(),
                lags.x + 1,
                lags.u,
                lags.d
            )));
        }
        Ok(())
    }

    /// Stacks equally shaped histories into `B`-row constants.
    pub fn batch_on(tape: &mut Tape, histories: &[&History]) -> Result<HistoryVars, SurrogateError> {
        let first = histories
            .first()
            .ok_or_else(|| SurrogateError::Contract("empty history batch".into()))?;
        let stack = |tape: &mut Tape, pick: &dyn Fn(&History) -> &Vec<Vec<f64>>| -> Result<Vec<Var>, SurrogateError> {
            (0..pick(first).len())
                .map(|k| {
                    let rows: Vec<Vec<f64>> = histories.iter().map(|h| pick(h)[k].clone()).collect();
                    Ok(tape.constant(Tensor::from_rows(&rows)?))
                })
                .collect()
        };
        Ok(HistoryVars {
            x: stack(tape, &|h| &h.x)?,
            u: stack(tape, &|h| &h.u)?,
            d: stack(tape, &|h| &h.d)?,
        })
    }
}

/// [`History`] recorded on a tape, each entry `B x n`.
#[derive(Clone, Debug)]
pub struct HistoryVars {
    pub x: Vec<Var>,
    pub u: Vec<Var>,
    pub d: Vec<Var>,
}

/// Constant rows for z-scoring a channel group on the tape.
struct ZScore {
    mean: Var,
    inv_std: Var,
    std: Var,
}

impl ZScore {
    fn on(tape: &mut Tape, s: &ChannelStats) -> Self {
        let inv: Vec<f64> = s.std.iter().map(|v| 1.0 / v).collect();
        Self {
            mean: tape.constant(Tensor::row(&s.mean)),
            inv_std: tape.constant(Tensor::row(&inv)),
            std: tape.constant(Tensor::row(&s.std)),
        }
    }

    fn apply(&self, tape: &mut Tape, v: Var) -> Result<Var, SurrogateError> {
        let c = tape.sub(v, self.mean)?;
        Ok(tape.hadamard(c, self.inv_std)?)
    }

    fn invert(&self, tape: &mut Tape, z: Var) -> Result<Var, SurrogateError> {
        let s = tape.hadamard(z, self.std)?;
        Ok(tape.add(s, self.mean)?)
    }
}

impl SurrogateModel {
    /// Multi-step prediction on the tape. `controls[k]` and `dists[k]` are the raw
    /// `u_{t+k}` and `d_{t+k}` (`B x n`); returns raw `x_{t+1..t+H}`.
    ///
    /// Predictions are fed back into the state window, so gradients flow through
    /// the whole horizon.
    pub fn rollout_on(
        &self,
        tape: &mut Tape,
        p: &[Var],
        hist: &HistoryVars,
        controls: &[Var],
        dists: &[Var],
    ) -> Result<Vec<Var>, SurrogateError> {
        let horizon = controls.len();
        if horizon == 0 {
            return Err(SurrogateError::Contract("rollout horizon must be at least 1".into()));
        }
        if dists.len() != horizon {
            return Err(SurrogateError::Shape(format!(
                "{horizon} controls but {} disturbances",
                dists.len()
            )));
        }
        let l = self.lags;
        if hist.x.len() != l.x + 1 || hist.u.len() != l.u || hist.d.len() != l.d {
            return Err(SurrogateError::Shape(format!("history does not cover lags {l}")));
        }
        let zx_s = ZScore::on(tape, &self.normalizer.x);
        let zu_s = ZScore::on(tape, &self.normalizer.u);
        let zd_s = ZScore::on(tape, &self.normalizer.d);
        let mut zx: VecDeque<Var> = hist.x.iter().map(|&v| zx_s.apply(tape, v)).collect::<Result<_, _>>()?;
        let mut zu: VecDeque<Var> = hist.u.iter().map(|&v| zu_s.apply(tape, v)).collect::<Result<_, _>>()?;
        let mut zd: VecDeque<Var> = hist.d.iter().map(|&v| zd_s.apply(tape, v)).collect::<Result<_, _>>()?;

        let carry = self.kind == ModelKind::Lstm && self.arch.lstm_rollout == LstmRollout::Carry;
        let mut state: Option<(Var, Var)> = None;
        let mut out = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let u = zu_s.apply(tape, controls[k])?;
            zu.push_back(u);
            zd.push_back(zd_s.apply(tape, dists[k])?);
            let z_next = match (carry, state) {
                (true, Some((h, c))) => {
                    let (h1, c1, _) = self.lstm_gates(tape, p, u, h, c)?;
                    state = Some((h1, c1));
                    self.lstm_decode(tape, p, h1)?
                }
                _ => {
                    let parts: Vec<Var> = zx.iter().chain(zu.iter()).chain(zd.iter()).copied().collect();
                    let win = tape.concat(&parts)?;
                    if carry {
                        let (h0, c0) = self.lstm_encode(tape, p, win)?;
                        let (h1, c1, _) = self.lstm_gates(tape, p, u, h0, c0)?;
                        state = Some((h1, c1));
                        self.lstm_decode(tape, p, h1)?
                    } else {
                        self.forward_window(tape, p, win)?
                    }
                }
            };
            out.push(zx_s.invert(tape, z_next)?);
            zx.push_back(z_next);
            zx.pop_front();
            zu.pop_front();
            zd.pop_front();
        }
        Ok(out)
    }

    /// Raw `x_{t+1..t+H}` for one history and `H` planned controls and disturbances.
    pub fn rollout(
        &self,
        history: &History,
        controls: &[Vec<f64>],
        dists: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>, SurrogateError> {
        history.check(self.lags)?;
        let mut tape = Tape::new();
        let p = self.params_on(&mut tape, false);
        let hv = History::batch_on(&mut tape, &[history])?;
        let cs: Vec<Var> = controls.iter().map(|c| tape.constant(Tensor::row(c))).collect();
        let ds: Vec<Var> = dists.iter().map(|d| tape.constant(Tensor::row(d))).collect();
        let ys = self.rollout_on(&mut tape, &p, &hv, &cs, &ds)?;
        Ok(ys.iter().map(|&y| tape.value(y).data().to_vec()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny;
    use super::*;
    use crate::diff::grad_check;

    fn history(lags: LagSpec) -> History {
        History {
            x: (0..=lags.x).map(|k| vec![20.0 + k as f64, 0.5]).collect(),
            u: (0..lags.u).map(|k| vec![0.1 * k as f64]).collect(),
            d: (0..lags.d).map(|k| vec![-3.0 + k as f64]).collect(),
        }
    }

    #[test]
    fn horizon_one_matches_predict_one() {
        let lags = LagSpec::new(1, 2, 1);
        for kind in ModelKind::ALL {
            let m = tiny(kind, lags, 5);
            let h = history(lags);
            let u = vec![0.7];
            let d = vec![1.5];
            let r = m.rollout(&h, &[u.clone()], &[d.clone()]).unwrap();
            let mut uw = h.u.clone();
            uw.push(u);
            let mut dw = h.d.clone();
            dw.push(d);
            let p = m.predict_one(&h.x, &uw, &dw).unwrap();
            for (a, b) in r[0].iter().zip(&p) {
                assert!((a - b).abs() < 1e-14, "{kind}");
            }
        }
    }

    #[test]
    fn identity_linear_rollout_is_constant() {
        let lags = LagSpec::new(0, 0, 0);
        let m = tiny(ModelKind::Linear, lags, 0);
        let mut w = Tensor::zeros(4, 2);
        w.set(0, 0, 1.0);
        w.set(1, 1, 1.0);
        let m = m.with_params(vec![w]).unwrap();
        let h = History { x: vec![vec![21.5, 0.25]], u: vec![], d: vec![] };
        let ys = m.rollout(&h, &vec![vec![0.3]; 6], &vec![vec![4.0]; 6]).unwrap();
        assert!(ys.iter().all(|y| y == &vec![21.5, 0.25]));
    }

    #[test]
    fn zero_horizon_is_an_error() {
        let lags = LagSpec::new(0, 0, 0);
        let m = tiny(ModelKind::Mlp, lags, 0);
        let h = History { x: vec![vec![21.5, 0.25]], u: vec![], d: vec![] };
        assert!(matches!(m.rollout(&h, &[], &[]), Err(SurrogateError::Contract(_))));
    }

    #[test]
    fn rollout_gradient_matches_finite_differences() {
        let lags = LagSpec::new(1, 1, 1);
        for kind in ModelKind::ALL {
            for mode in [LstmRollout::Carry, LstmRollout::Reencode] {
                let mut m = tiny(kind, lags, 11);
                m.arch.lstm_rollout = mode;
                let h = history(lags);
                let point = Tensor::new(3, 1, vec![0.2, -0.4, 0.9]).unwrap();
                let err = grad_check(
                    |tape, u| {
                        let p = m.params_on(tape, false);
                        let hv = History::batch_on(tape, &[&h]).unwrap();
                        let cs: Vec<Var> = (0..3).map(|k| tape.slice_rows(u, k, k + 1).unwrap()).collect();
                        let ds: Vec<Var> = (0..3).map(|k| tape.constant(Tensor::row(&[k as f64]))).collect();
                        let ys = m.rollout_on(tape, &p, &hv, &cs, &ds).unwrap();
                        let sq: Vec<Var> = ys.iter().map(|&y| tape.square(y)).collect();
                        let all = tape.concat(&sq)?;
                        Ok(tape.sum(all))
                    },
                    &point,
                    1e-5,
                )
                .unwrap();
                assert!(err < 1e-4, "{kind} {mode:?}: {err}");
            }
        }
    }

    #[test]
    fn batched_rows_are_independent() {
        let lags = LagSpec::new(1, 1, 1);
        let m = tiny(ModelKind::Lstm, lags, 2);
        let h1 = history(lags);
        let mut h2 = history(lags);
        h2.x[1][0] = 30.0;
        let mut tape = Tape::new();
        let p = m.params_on(&mut tape, false);
        let hv = History::batch_on(&mut tape, &[&h1, &h2]).unwrap();
        let c = tape.constant(Tensor::from_rows(&[vec![0.5], vec![0.5]]).unwrap());
        let d = tape.constant(Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        let ys = m.rollout_on(&mut tape, &p, &hv, &[c, c], &[d, d]).unwrap();
        let single = m.rollout(&h2, &[vec![0.5], vec![0.5]], &[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(tape.value(ys[1]).row_slice(1), single[1].as_slice());
    }
}
