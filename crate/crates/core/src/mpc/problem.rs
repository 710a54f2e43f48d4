use crate::diff::{Tape, Tensor, Var};
use crate::surrogate::{History, SurrogateModel};

use super::MpcError;

/// A box-constrained scalar function of a flat decision vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn value(&self, u: &[f64]) -> Result<f64, MpcError>;
    fn value_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>), MpcError>;

    /// Componentwise projection onto the box.
    fn clamp(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower().iter().zip(self.upper()))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }

    fn is_feasible(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lower().iter().zip(self.upper()))
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }
}

/// Planned controls, `H x n_u`, raw units.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPlan {
    pub rows: Vec<Vec<f64>>,
}

impl ControlPlan {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn constant(horizon: usize, u: &[f64]) -> Self {
        Self {
            rows: vec![u.to_vec(); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.rows.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }

    pub fn from_flat(flat: &[f64], n_u: usize) -> Self {
        Self {
            rows: flat.chunks(n_u).map(<[f64]>::to_vec).collect(),
        }
    }
}

/// One receding-horizon subproblem: minimize predicted power plus control smoothness
/// plus a comfort penalty over `H` steps, subject only to control bounds.
///
/// The dynamics are eliminated by rolling the surrogate forward inside the cost.
#[derive(Clone, Debug)]
pub struct MpcProblem<'a> {
    pub model: &'a SurrogateModel,
    pub history: History,
    pub horizon: usize,
    /// Per-channel control box, shared by every step.
    pub u_lower: Vec<f64>,
    pub u_upper: Vec<f64>,
    /// `H` disturbance vectors `d_t..d_{t+H-1}`.
    pub forecast: Vec<Vec<f64>>,
    /// State channels with a soft band, e.g. zone temperatures.
    pub bounded_channels: Vec<usize>,
    /// `H x bounded_channels.len()`, the band applying to the predicted `x_{t+k+1}`.
    pub x_lower: Vec<Vec<f64>>,
    pub x_upper: Vec<Vec<f64>>,
    /// State channels summed as power, kW per step.
    pub power_channels: Vec<usize>,
    pub gamma: f64,
    /// Diagonal of the smoothness weight on box-normalized control increments.
    pub r_diag: Vec<f64>,
    lower_flat: Vec<f64>,
    upper_flat: Vec<f64>,
}

impl<'a> MpcProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a SurrogateModel,
        history: History,
        u_lower: Vec<f64>,
        u_upper: Vec<f64>,
        forecast: Vec<Vec<f64>>,
        bounded_channels: Vec<usize>,
        x_lower: Vec<Vec<f64>>,
        x_upper: Vec<Vec<f64>>,
        power_channels: Vec<usize>,
        gamma: f64,
        r_diag: Vec<f64>,
    ) -> Result<Self, MpcError> {
        let horizon = forecast.len();
        let bad = |m: String| Err(MpcError::Contract(m));
        let dims = model.dims;
        if horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        history.check(model.lags)?;
        if u_lower.len() != dims.n_u || u_upper.len() != dims.n_u || r_diag.len() != dims.n_u {
            return bad(format!("control box and R need {} entries", dims.n_u));
        }
        if u_lower.iter().zip(&u_upper).any(|(l, u)| !(l <= u)) {
            return bad("control box needs lower <= upper".into());
        }
        if forecast.iter().any(|d| d.len() != dims.n_d) {
            return bad(format!("forecast vectors need {} channels", dims.n_d));
        }
        if x_lower.len() != horizon || x_upper.len() != horizon {
            return bad(format!("state bands need {horizon} rows"));
        }
        let nb = bounded_channels.len();
        if x_lower.iter().chain(&x_upper).any(|r| r.len() != nb) {
            return bad(format!("state band rows need {nb} entries"));
        }
        if bounded_channels.iter().chain(&power_channels).any(|&c| c >= dims.n_x) {
            return bad(format!("channel index out of range for n_x = {}", dims.n_x));
        }
        if !(gamma >= 0.0) || r_diag.iter().any(|r| !(*r >= 0.0)) {
            return bad("gamma and R must be nonnegative".into());
        }
        let lower_flat = u_lower.iter().copied().cycle().take(horizon * dims.n_u).collect();
        let upper_flat = u_upper.iter().copied().cycle().take(horizon * dims.n_u).collect();
        Ok(Self {
            model,
            history,
            horizon,
            u_lower,
            u_upper,
            forecast,
            bounded_channels,
            x_lower,
            x_upper,
            power_channels,
            gamma,
            r_diag,
            lower_flat,
            upper_flat,
        })
    }

    pub fn n_u(&self) -> usize {
        self.model.dims.n_u
    }

    pub fn clamp_plan(&self, plan: &ControlPlan) -> ControlPlan {
        ControlPlan {
            rows: plan
                .rows
                .iter()
                .map(|r| {
                    r.iter()
                        .zip(self.u_lower.iter().zip(&self.u_upper))
                        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn midpoint_plan(&self) -> ControlPlan {
        let mid: Vec<f64> = self
            .u_lower
            .iter()
            .zip(&self.u_upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect();
        ControlPlan::constant(self.horizon, &mid)
    }

    /// Records the cost of `controls` (`H` vars, `B x n_u`, raw) and returns a `B x 1` var.
    pub fn cost_on(&self, tape: &mut Tape, controls: &[Var]) -> Result<Var, MpcError> {
        if controls.len() != self.horizon {
            return Err(MpcError::Contract(format!(
                "plan has {} steps, horizon is {}",
                controls.len(),
                self.horizon
            )));
        }
        let [b, cols] = tape.shape(controls[0]);
        if cols != self.n_u() {
            return Err(MpcError::Contract(format!("plan rows need {} controls", self.n_u())));
        }
        let n_x = self.model.dims.n_x;
        let p = self.model.params_on(tape, false);
        let hist_rows = vec![&self.history; b];
        let hv = History::batch_on(tape, &hist_rows)?;
        let ds: Vec<Var> = self
            .forecast
            .iter()
            .map(|d| tape.constant(Tensor::from_rows(&vec![d.clone(); b]).expect("rows")))
            .collect();
        let ys = self.model.rollout_on(tape, &p, &hv, controls, &ds)?;

        let mut power_sel = Tensor::zeros(n_x, 1);
        for &c in &self.power_channels {
            power_sel.set(c, 0, power_sel.get(c, 0) + 1.0);
        }
        let power_sel = tape.constant(power_sel);
        let nb = self.bounded_channels.len();
        let mut band_sel = Tensor::zeros(n_x, nb);
        for (j, &c) in self.bounded_channels.iter().enumerate() {
            band_sel.set(c, j, 1.0);
        }
        let band_sel = tape.constant(band_sel);

        let mut terms: Vec<Var> = Vec::new();
        for (k, &y) in ys.iter().enumerate() {
            if !self.power_channels.is_empty() {
                terms.push(tape.matmul(y, power_sel)?);
            }
            if nb > 0 && self.gamma > 0.0 {
                let xb = tape.matmul(y, band_sel)?;
                let lo = tape.constant(Tensor::row(&self.x_lower[k]));
                let hi = tape.constant(Tensor::row(&self.x_upper[k]));
                let over = tape.sub(xb, hi)?;
                let over = tape.relu(over);
                let under = tape.sub(xb, lo)?;
                let under = tape.scalar_mul(under, -1.0);
                let under = tape.relu(under);
                let both = tape.add(over, under)?;
                let s = tape.sum_rows(both);
                terms.push(tape.scalar_mul(s, self.gamma));
            }
        }
        if self.horizon > 1 && self.r_diag.iter().any(|&r| r > 0.0) {
            let inv: Vec<f64> = self
                .u_lower
                .iter()
                .zip(&self.u_upper)
                .map(|(l, u)| if u > l { 1.0 / (u - l) } else { 0.0 })
                .collect();
            let inv = tape.constant(Tensor::row(&inv));
            let r = tape.constant(Tensor::row(&self.r_diag));
            for k in 1..self.horizon {
                let du = tape.sub(controls[k], controls[k - 1])?;
                let du = tape.hadamard(du, inv)?;
                let sq = tape.square(du);
                let w = tape.hadamard(sq, r)?;
                terms.push(tape.sum_rows(w));
            }
        }
        let mut total = match terms.first() {
            Some(&t) => t,
            None => tape.constant(Tensor::zeros(b, 1)),
        };
        for &t in &terms[1.min(terms.len())..] {
            total = tape.add(total, t)?;
        }
        Ok(total)
    }

    /// Costs of many flattened plans at once.
    pub fn cost_batch(&self, plans: &[Vec<f64>]) -> Result<Vec<f64>, MpcError> {
        if plans.is_empty() {
            return Ok(Vec::new());
        }
        let n_u = self.n_u();
        for p in plans {
            if p.len() != self.horizon * n_u {
                return Err(MpcError::Contract(format!(
                    "plan has {} entries, expected {}",
                    p.len(),
                    self.horizon * n_u
                )));
            }
        }
        let mut tape = Tape::new();
        let controls: Vec<Var> = (0..self.horizon)
            .map(|k| {
                let rows: Vec<Vec<f64>> = plans.iter().map(|p| p[k * n_u..(k + 1) * n_u].to_vec()).collect();
                tape.constant(Tensor::from_rows(&rows).expect("rows"))
            })
            .collect();
        let c = self.cost_on(&mut tape, &controls)?;
        Ok(tape.value(c).data().to_vec())
    }

    pub fn cost(&self, plan: &ControlPlan) -> Result<f64, MpcError> {
        self.value(&plan.flatten())
    }
}

impl Objective for MpcProblem<'_> {
    fn dim(&self) -> usize {
        self.horizon * self.n_u()
    }

    fn lower(&self) -> &[f64] {
        &self.lower_flat
    }

    fn upper(&self) -> &[f64] {
        &self.upper_flat
    }

    fn value(&self, u: &[f64]) -> Result<f64, MpcError> {
        Ok(self.cost_batch(&[u.to_vec()])?[0])
    }

    fn value_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>), MpcError> {
        if u.len() != self.dim() {
            return Err(MpcError::Contract(format!("plan has {} entries, expected {}", u.len(), self.dim())));
        }
        let n_u = self.n_u();
        let mut tape = Tape::new();
        let flat = tape.var(Tensor::new(self.horizon, n_u, u.to_vec()).expect("sized"));
        let controls: Vec<Var> = (0..self.horizon)
            .map(|k| tape.slice_rows(flat, k, k + 1))
            .collect::<Result<_, _>>()?;
        let c = self.cost_on(&mut tape, &controls)?;
        let root = tape.sum(c);
        let f = tape.value(root).item();
        let g = tape.backward(root)?.wrt(flat).into_data();
        Ok((f, g))
    }
}
