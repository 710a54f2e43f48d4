use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{DataError, Dataset};
use crate::diff::{Tape, Tensor};

use super::{SurrogateError, SurrogateModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// 200 epochs.
    pub fn desk() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// 1000 epochs.
    pub fn paper() -> Self {
        Self {
            epochs: 1000,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        if !(self.learning_rate > 0.0) {
            return Err(SurrogateError::Contract("learning_rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(SurrogateError::Contract("epochs and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(SurrogateError::Contract("Adam needs beta in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction. Each parameter block keeps its own moment slots.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn from_config(c: &TrainConfig) -> Self {
        Self::new(c.learning_rate, c.beta1, c.beta2, c.epsilon)
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Applies one update to every block; `grads[k]` matches `params[k]`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.epsilon);
            }
        }
    }
}

/// Per-epoch one-step MSE in normalized space.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub train: Vec<f64>,
    /// NaN when no validation set was given.
    pub val: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl LossCurve {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut s = String::from("epoch,train_mse,val_mse\n");
        for (k, (t, v)) in self.train.iter().zip(&self.val).enumerate() {
            s.push_str(&format!("{},{t},{v}\n", k + 1));
        }
        f.write_all(s.as_bytes()).map_err(|e| DataError::io(path, e))
    }
}

/// Z-scored `(inputs, targets)` matrices of a dataset.
pub(crate) fn normalized_pairs(model: &SurrogateModel, ds: &Dataset) -> Result<(Tensor, Tensor), SurrogateError> {
    let n = ds.len();
    let w = model.input_width();
    let mut xs = Vec::with_capacity(n * w);
    let mut ys = Vec::with_capacity(n * model.dims.n_x);
    for (inp, tgt) in ds.inputs.iter().zip(&ds.targets) {
        xs.extend(model.normalize_window(inp)?);
        if tgt.len() != model.dims.n_x {
            return Err(SurrogateError::Shape(format!(
                "target has {} channels, model predicts {}",
                tgt.len(),
                model.dims.n_x
            )));
        }
        ys.extend(model.normalizer.x.apply(tgt));
    }
    Ok((Tensor::new(n, w, xs)?, Tensor::new(n, model.dims.n_x, ys)?))
}

/// Mean one-step squared error in z-space, evaluated in chunks.
/// One-step MSE in normalized units over every sample of `ds`.
pub fn dataset_mse(model: &SurrogateModel, ds: &Dataset) -> Result<f64, SurrogateError> {
    if ds.is_empty() {
        return Err(SurrogateError::Contract("dataset is empty".into()));
    }
    let (x, y) = normalized_pairs(model, ds)?;
    one_step_mse(model, &x, &y)
}

pub(crate) fn one_step_mse(model: &SurrogateModel, x: &Tensor, y: &Tensor) -> Result<f64, SurrogateError> {
    const CHUNK: usize = 1024;
    let n = x.rows();
    let mut total = 0.0;
    for start in (0..n).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let mut tape = Tape::new();
        let p = model.params_on(&mut tape, false);
        let xb = tape.constant(x.select_rows(&idx));
        let pred = model.forward_window(&mut tape, &p, xb)?;
        let pv = tape.value(pred);
        let yb = y.select_rows(&idx);
        total += pv.data().iter().zip(yb.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / (n * y.cols()) as f64)
}

/// Minibatch Adam on one-step MSE. Returns the parameters of the best epoch, scored on
/// `val` when given and on the training set otherwise.
pub fn train(
    model: SurrogateModel,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(SurrogateModel, LossCurve), SurrogateError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(SurrogateError::Contract("training set is empty".into()));
    }
    for ds in std::iter::once(train_set).chain(val_set) {
        if ds.dims.is_some_and(|d| d != model.dims) || ds.lags.is_some_and(|l| l != model.lags) {
            return Err(SurrogateError::Shape(format!(
                "dataset {:?} / {:?} does not match model {:?} / {}",
                ds.dims, ds.lags, model.dims, model.lags
            )));
        }
    }
    let (x, y) = normalized_pairs(&model, train_set)?;
    let val = match val_set {
        Some(v) if !v.is_empty() => Some(normalized_pairs(&model, v)?),
        _ => None,
    };

    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::from_config(config);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut curve = LossCurve::default();
    let mut best = (f64::INFINITY, model.params.clone());

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let p = model.params_on(&mut tape, true);
            let xb = tape.constant(x.select_rows(idx));
            let yb = tape.constant(y.select_rows(idx));
            let pred = model.forward_window(&mut tape, &p, xb)?;
            let loss = tape.mse(pred, yb)?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(SurrogateError::Diverged {
                    epoch,
                    message: format!("minibatch loss {lv}"),
                });
            }
            let grads = tape.backward(loss)?;
            let gs: Vec<Tensor> = p.iter().map(|&v| grads.wrt(v)).collect();
            let mut slots: Vec<&mut [f64]> = model.params.iter_mut().map(Tensor::data_mut).collect();
            let gref: Vec<&[f64]> = gs.iter().map(Tensor::data).collect();
            adam.step(&mut slots, &gref);
        }
        let tr = one_step_mse(&model, &x, &y)?;
        if !tr.is_finite() {
            return Err(SurrogateError::Diverged {
                epoch,
                message: format!("train MSE {tr}"),
            });
        }
        let va = match &val {
            Some((vx, vy)) => one_step_mse(&model, vx, vy)?,
            None => f64::NAN,
        };
        curve.train.push(tr);
        curve.val.push(va);
        let score = if val.is_some() { va } else { tr };
        if score < best.0 {
            best = (score, model.params.clone());
            curve.best_epoch = epoch;
        }
        log::debug!("epoch {epoch}: train {tr:.3e} val {va:.3e}");
    }
    model.params = best.1;
    Ok((model, curve))
}
