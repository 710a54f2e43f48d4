//! Lagged surrogate models of the building dynamics.
//!
//! Three families map the lag window `[x_{t-Mx..t}, u_{t-Mu..t}, d_{t-Md..t}]` to
//! `x_{t+1}`: a linear ARX map, a tanh MLP, and an LSTM whose encoder turns the window
//! into an initial `(h, c)` and whose gates read the current control. All arithmetic
//! runs in z-scored space; inputs and outputs of the public API are in plant units.
//!
//! Weights are stored input-major (`in x out`) so a batch of row vectors multiplies
//! from the left.

mod checkpoint;
mod eval;
mod rollout;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor};
pub use eval::{admissible_starts, evaluate, evaluate_with, EvalReport};
pub use rollout::{History, HistoryVars};
pub use train::{dataset_mse, train, Adam, LossCurve, TrainConfig};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, Dims, LagSpec, Normalizer};
use crate::diff::{DiffError, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Mlp,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Linear, ModelKind::Mlp, ModelKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "mlp" => Ok(ModelKind::Mlp),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(format!("unknown model {other:?}; expected linear, mlp or lstm")),
        }
    }
}

/// How the LSTM advances over a multi-step horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LstmRollout {
    /// Encode once, then carry `(h, c)` through the gates for every later control.
    Carry,
    /// Re-encode the window (with fed-back predictions) at every step.
    Reencode,
}

/// Layer sizes. `depth` only applies to the MLP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub width: usize,
    /// MLP hidden layers.
    pub depth: usize,
    /// LSTM hidden and cell width.
    pub hidden: usize,
    pub lstm_rollout: LstmRollout,
}

impl Architecture {
    /// Width 64, four MLP layers, LSTM state 64.
    pub fn desk() -> Self {
        Self {
            width: 64,
            depth: 4,
            hidden: 64,
            lstm_rollout: LstmRollout::Reencode,
        }
    }

    /// Width 256 throughout.
    pub fn paper() -> Self {
        Self {
            width: 256,
            depth: 4,
            hidden: 256,
            lstm_rollout: LstmRollout::Reencode,
        }
    }
}

/// A trained or freshly initialized surrogate.
///
/// Parameter layout by kind:
/// - linear: `[W]`, `W` is `width(lags) x n_x`; its row blocks are `A_k^T`, `B_k^T`, `C_k^T`
///   ordered oldest lag first.
/// - mlp: `depth` hidden `(W, b)` pairs with tanh, then a linear `(W, b)` to `n_x`.
/// - lstm: encoder `(W, b) x 2`, gates `(W_u, b_u, W_h, b_h)` with the four gates
///   `[i | f | g | o]` stacked along columns, decoder `(W, b) x 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModel {
    pub kind: ModelKind,
    pub lags: LagSpec,
    pub dims: Dims,
    pub normalizer: Normalizer,
    pub arch: Architecture,
    pub params: Vec<Tensor>,
}

/// Gate activations and new state of one LSTM update.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmStep {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
}

fn uniform_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    Tensor::new(rows, cols, data).expect("sized")
}

impl SurrogateModel {
    /// `(rows, cols)` of every parameter, in layout order.
    pub fn param_shapes(kind: ModelKind, lags: LagSpec, dims: Dims, arch: &Architecture) -> Vec<[usize; 2]> {
        let input = lags.input_width(dims);
        let w = arch.width;
        match kind {
            ModelKind::Linear => vec![[input, dims.n_x]],
            ModelKind::Mlp => {
                let mut v = Vec::new();
                let mut fan = input;
                for _ in 0..arch.depth {
                    v.push([fan, w]);
                    v.push([1, w]);
                    fan = w;
                }
                v.push([fan, dims.n_x]);
                v.push([1, dims.n_x]);
                v
            }
            ModelKind::Lstm => {
                let h = arch.hidden;
                let enc_in = input - dims.n_u;
                vec![
                    [enc_in, w],
                    [1, w],
                    [w, 2 * h],
                    [1, 2 * h],
                    [dims.n_u, 4 * h],
                    [1, 4 * h],
                    [h, 4 * h],
                    [1, 4 * h],
                    [h, w],
                    [1, w],
                    [w, dims.n_x],
                    [1, dims.n_x],
                ]
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self.kind {
            ModelKind::Linear => vec!["W".into()],
            ModelKind::Mlp => {
                let mut v = Vec::new();
                for k in 0..=self.arch.depth {
                    v.push(format!("W_{k}"));
                    v.push(format!("b_{k}"));
                }
                v
            }
            ModelKind::Lstm => [
                "enc_W_0", "enc_b_0", "enc_W_1", "enc_b_1", "gate_W_u", "gate_b_u", "gate_W_h",
                "gate_b_h", "dec_W_0", "dec_b_0", "dec_W_1", "dec_b_1",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    /// Parameters drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(
        kind: ModelKind,
        lags: LagSpec,
        dims: Dims,
        normalizer: Normalizer,
        arch: Architecture,
        seed: u64,
    ) -> Result<Self, SurrogateError> {
        if normalizer.x.len() != dims.n_x || normalizer.u.len() != dims.n_u || normalizer.d.len() != dims.n_d {
            return Err(SurrogateError::Shape(format!(
                "normalizer has {}/{}/{} channels, dims are {}/{}/{}",
                normalizer.x.len(),
                normalizer.u.len(),
                normalizer.d.len(),
                dims.n_x,
                dims.n_u,
                dims.n_d
            )));
        }
        if kind != ModelKind::Linear && (arch.width == 0 || (kind == ModelKind::Lstm && arch.hidden == 0)) {
            return Err(SurrogateError::Contract("layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = Self::param_shapes(kind, lags, dims, &arch);
        // layouts alternate (W, b); a bias shares the fan-in of its weight
        let mut params = Vec::with_capacity(shapes.len());
        let mut fan = 0;
        for (k, [r, c]) in shapes.into_iter().enumerate() {
            if k % 2 == 0 {
                fan = r;
            }
            params.push(uniform_init(&mut rng, r, c, fan));
        }
        Ok(Self {
            kind,
            lags,
            dims,
            normalizer,
            arch,
            params,
        })
    }

    /// Replaces the parameters after checking every shape.
    pub fn with_params(mut self, params: Vec<Tensor>) -> Result<Self, SurrogateError> {
        let shapes = Self::param_shapes(self.kind, self.lags, self.dims, &self.arch);
        if shapes.len() != params.len() {
            return Err(SurrogateError::Shape(format!(
                "{} expects {} parameter tensors, got {}",
                self.kind,
                shapes.len(),
                params.len()
            )));
        }
        for (k, (s, p)) in shapes.iter().zip(&params).enumerate() {
            if *s != p.shape() {
                return Err(SurrogateError::Shape(format!(
                    "parameter {k}: expected {s:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        self.params = params;
        Ok(self)
    }

    pub fn input_width(&self) -> usize {
        self.lags.input_width(self.dims)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Records the parameters on `tape`, differentiable or not.
    pub fn params_on(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.var(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect()
    }

    /// Linear model blocks `(A_k, B_k, C_k)` indexed by lag `k`, each `n_x x n`.
    pub fn linear_blocks(&self) -> Option<(Vec<Tensor>, Vec<Tensor>, Vec<Tensor>)> {
        if self.kind != ModelKind::Linear {
            return None;
        }
        let w = &self.params[0];
        let Dims { n_x, n_u, n_d } = self.dims;
        let block = |row0: usize, n: usize| -> Tensor {
            // rows row0..row0+n of W, transposed to n_x x n
            let mut t = Tensor::zeros(n_x, n);
            for r in 0..n {
                for c in 0..n_x {
                    t.set(c, r, w.get(row0 + r, c));
                }
            }
            t
        };
        let l = self.lags;
        let xs = (0..=l.x).map(|k| block((l.x - k) * n_x, n_x)).collect();
        let u0 = (l.x + 1) * n_x;
        let us = (0..=l.u).map(|k| block(u0 + (l.u - k) * n_u, n_u)).collect();
        let d0 = u0 + (l.u + 1) * n_u;
        let ds = (0..=l.d).map(|k| block(d0 + (l.d - k) * n_d, n_d)).collect();
        Some((xs, us, ds))
    }

    /// Z-scores a raw lag window block by block.
    pub fn normalize_window(&self, raw: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        if raw.len() != self.input_width() {
            return Err(SurrogateError::Shape(format!(
                "window has {} values, lags {} need {}",
                raw.len(),
                self.lags,
                self.input_width()
            )));
        }
        let Dims { n_x, n_u, n_d } = self.dims;
        let mut out = Vec::with_capacity(raw.len());
        let mut pos = 0;
        for (count, n, stats) in [
            (self.lags.x + 1, n_x, &self.normalizer.x),
            (self.lags.u + 1, n_u, &self.normalizer.u),
            (self.lags.d + 1, n_d, &self.normalizer.d),
        ] {
            for _ in 0..count {
                out.extend(stats.apply(&raw[pos..pos + n]));
                pos += n;
            }
        }
        Ok(out)
    }

    fn dense(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }

    /// Applies `tanh(x W0 + b0) W1 + b1`.
    fn two_layer(tape: &mut Tape, x: Var, p: &[Var]) -> Result<Var, DiffError> {
        let h = Self::dense(tape, x, p[0], p[1])?;
        let h = tape.tanh(h);
        Self::dense(tape, h, p[2], p[3])
    }

    /// One gate update; returns `(h, c, [i, f, g, o])`.
    pub(crate) fn lstm_gates(
        &self,
        tape: &mut Tape,
        p: &[Var],
        u: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var, [Var; 4]), DiffError> {
        let hd = self.arch.hidden;
        let zu = Self::dense(tape, u, p[4], p[5])?;
        let zh = Self::dense(tape, h, p[6], p[7])?;
        let z = tape.add(zu, zh)?;
        let zi = tape.slice(z, 0, hd)?;
        let zf = tape.slice(z, hd, 2 * hd)?;
        let zg = tape.slice(z, 2 * hd, 3 * hd)?;
        let zo = tape.slice(z, 3 * hd, 4 * hd)?;
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let g = tape.tanh(zg);
        let o = tape.sigmoid(zo);
        let fc = tape.hadamard(f, c)?;
        let ig = tape.hadamard(i, g)?;
        let c1 = tape.add(fc, ig)?;
        let tc = tape.tanh(c1);
        let h1 = tape.hadamard(o, tc)?;
        Ok((h1, c1, [i, f, g, o]))
    }

    /// Column range of `u_t` inside a window.
    fn current_u_cols(&self) -> (usize, usize) {
        let start = (self.lags.x + 1) * self.dims.n_x + self.lags.u * self.dims.n_u;
        (start, start + self.dims.n_u)
    }

    /// LSTM encoder on a z-window with the `u_t` columns removed; returns `(h, c)`.
    pub(crate) fn lstm_encode(&self, tape: &mut Tape, p: &[Var], zwin: Var) -> Result<(Var, Var), DiffError> {
        let (us, ue) = self.current_u_cols();
        let width = self.input_width();
        let mut parts = vec![tape.slice(zwin, 0, us)?];
        if ue < width {
            parts.push(tape.slice(zwin, ue, width)?);
        }
        let enc_in = if parts.len() == 1 { parts[0] } else { tape.concat(&parts)? };
        let hc = Self::two_layer(tape, enc_in, &p[0..4])?;
        let hd = self.arch.hidden;
        let h = tape.slice(hc, 0, hd)?;
        let c = tape.slice(hc, hd, 2 * hd)?;
        Ok((h, c))
    }

    pub(crate) fn lstm_decode(&self, tape: &mut Tape, p: &[Var], h: Var) -> Result<Var, DiffError> {
        Self::two_layer(tape, h, &p[8..12])
    }

    /// One-step prediction on a batch of z-scored windows (`B x width`), in z-space.
    pub fn forward_window(&self, tape: &mut Tape, p: &[Var], zwin: Var) -> Result<Var, SurrogateError> {
        let [_, cols] = tape.shape(zwin);
        if cols != self.input_width() {
            return Err(SurrogateError::Shape(format!(
                "window width {cols}, lags {} need {}",
                self.lags,
                self.input_width()
            )));
        }
        Ok(match self.kind {
            ModelKind::Linear => tape.matmul(zwin, p[0])?,
            ModelKind::Mlp => {
                let mut h = zwin;
                let depth = self.arch.depth;
                for k in 0..depth {
                    let y = Self::dense(tape, h, p[2 * k], p[2 * k + 1])?;
                    h = tape.tanh(y);
                }
                Self::dense(tape, h, p[2 * depth], p[2 * depth + 1])?
            }
            ModelKind::Lstm => {
                let (us, ue) = self.current_u_cols();
                let u = tape.slice(zwin, us, ue)?;
                let (h0, c0) = self.lstm_encode(tape, p, zwin)?;
                let (h1, _, _) = self.lstm_gates(tape, p, u, h0, c0)?;
                self.lstm_decode(tape, p, h1)?
            }
        })
    }

    /// `x_{t+1}` in plant units from raw windows of `Mx+1`, `Mu+1` and `Md+1` entries,
    /// each ordered oldest first.
    pub fn predict_one(
        &self,
        x_window: &[Vec<f64>],
        u_window: &[Vec<f64>],
        d_window: &[Vec<f64>],
    ) -> Result<Vec<f64>, SurrogateError> {
        let l = self.lags;
        for (name, w, want, n) in [
            ("x", x_window, l.x + 1, self.dims.n_x),
            ("u", u_window, l.u + 1, self.dims.n_u),
            ("d", d_window, l.d + 1, self.dims.n_d),
        ] {
            if w.len() != want || w.iter().any(|r| r.len() != n) {
                return Err(SurrogateError::Shape(format!(
                    "{name} window must hold {want} vectors of {n} channels"
                )));
            }
        }
        let raw: Vec<f64> = x_window
            .iter()
            .chain(u_window)
            .chain(d_window)
            .flatten()
            .copied()
            .collect();
        self.predict_windows(&[raw]).map(|mut v| v.remove(0))
    }

    /// Batched one-step prediction from raw concatenated windows.
    pub fn predict_windows(&self, raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SurrogateError> {
        let z: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| self.normalize_window(r))
            .collect::<Result<_, _>>()?;
        let mut tape = Tape::new();
        let p = self.params_on(&mut tape, false);
        let zw = tape.constant(Tensor::from_rows(&z)?);
        let out = self.forward_window(&mut tape, &p, zw)?;
        let v = tape.value(out);
        Ok((0..v.rows()).map(|r| self.normalizer.x.invert(v.row_slice(r))).collect())
    }

    /// One LSTM gate update on plain vectors (z-space), for inspection and tests.
    pub fn lstm_cell(&self, u: &[f64], h: &[f64], c: &[f64]) -> Result<LstmStep, SurrogateError> {
        if self.kind != ModelKind::Lstm {
            return Err(SurrogateError::Contract(format!("lstm_cell on a {} model", self.kind)));
        }
        let hd = self.arch.hidden;
        if u.len() != self.dims.n_u || h.len() != hd || c.len() != hd {
            return Err(SurrogateError::Shape(format!(
                "lstm_cell expects u of {} and h, c of {hd}",
                self.dims.n_u
            )));
        }
        let mut tape = Tape::new();
        let p = self.params_on(&mut tape, false);
        let uv = tape.constant(Tensor::row(u));
        let hv = tape.constant(Tensor::row(h));
        let cv = tape.constant(Tensor::row(c));
        let (h1, c1, [i, f, g, o]) = self.lstm_gates(&mut tape, &p, uv, hv, cv)?;
        let get = |v: Var| tape.value(v).data().to_vec();
        Ok(LstmStep {
            h: get(h1),
            c: get(c1),
            i: get(i),
            f: get(f),
            g: get(g),
            o: get(o),
        })
    }
}
