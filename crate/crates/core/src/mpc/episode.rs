use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataio::{DataError, Trajectory};
use crate::plant::{comfort_bounds, ControlBox, Disturbance, Measurement, Plant, PlantConfig, StateLayout};
use crate::surrogate::{History, SurrogateModel};

use super::problem::{ControlPlan, MpcProblem, Objective};
use super::solvers::{solve_gdm, solve_sqp, SolveResult};
use super::{MpcConfig, MpcError, SolverKind};

/// Previous plan shifted left by one step with the last row repeated, or the box
/// midpoint when there is no previous plan.
pub fn warm_start(previous: Option<&SolveResult>, problem: &MpcProblem) -> ControlPlan {
    let n_u = problem.n_u();
    match previous {
        Some(prev) if prev.plan.len() == problem.dim() && problem.horizon > 0 => {
            let rows = ControlPlan::from_flat(&prev.plan, n_u).rows;
            let mut shifted: Vec<Vec<f64>> = rows[1..].to_vec();
            shifted.push(rows[rows.len() - 1].clone());
            ControlPlan::new(shifted)
        }
        _ => problem.midpoint_plan(),
    }
}

/// Bookkeeping of one control step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    /// Flattened plan the solver started from.
    pub init_plan: Vec<f64>,
    /// Solver outcome; on failure the plan is the initial plan and the cost is NaN.
    pub result: SolveResult,
    pub failed: bool,
}

/// A closed-loop run.
#[derive(Clone, Debug, Default)]
pub struct Episode {
    /// One record per step: the measurement at the end of the step, the applied
    /// control, the disturbance during the step, and the end-of-step time.
    pub outcome: Trajectory,
    /// Empty for baseline policies.
    pub steps: Vec<StepLog>,
    pub violation_steps: usize,
}

impl Episode {
    pub fn solve_times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.result.wall_time).collect()
    }

    /// `t_sec,x_*,u_*,d_*,cost,iters,solve_ms`; solver columns are empty for baselines.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let tr = &self.outcome;
        let mut s = String::from("t_sec");
        if let Some(d) = tr.dims() {
            for (p, n) in [("x", d.n_x), ("u", d.n_u), ("d", d.n_d)] {
                for i in 0..n {
                    s.push_str(&format!(",{p}_{i}"));
                }
            }
        }
        s.push_str(",cost,iters,solve_ms\n");
        for k in 0..tr.len() {
            s.push_str(&tr.t[k].to_string());
            for v in tr.x[k].iter().chain(&tr.u[k]).chain(&tr.d[k]) {
                s.push(',');
                s.push_str(&v.to_string());
            }
            match self.steps.get(k) {
                Some(st) => s.push_str(&format!(
                    ",{},{},{}\n",
                    st.result.cost,
                    st.result.iterations,
                    st.result.wall_time * 1e3
                )),
                None => s.push_str(",,,\n"),
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        f.write_all(s.as_bytes()).map_err(|e| DataError::io(path, e))
    }
}

/// What a policy sees before choosing `u_t`.
pub struct LoopView<'a> {
    /// Pre-step records of every earlier step, run-in included.
    pub log: &'a Trajectory,
    pub measurement: &'a Measurement,
    pub clock: f64,
    /// Global step index into the weather sequence.
    pub index: usize,
    pub weather: &'a [Disturbance],
    pub config: &'a PlantConfig,
}

/// Action chosen for one step and, for optimizing policies, its solver log.
pub type Decision = (Vec<f64>, Option<StepLog>);

/// Runs `run_in` steps at the box midpoint, then `steps` steps of `choose`.
pub fn run_loop<F>(
    plant: &mut Plant,
    weather: &[Disturbance],
    run_in: usize,
    steps: usize,
    mut choose: F,
) -> Result<Episode, MpcError>
where
    F: FnMut(&LoopView) -> Result<Decision, MpcError>,
{
    if weather.len() < run_in + steps {
        return Err(MpcError::Contract(format!(
            "weather has {} entries, run-in plus episode need {}",
            weather.len(),
            run_in + steps
        )));
    }
    let mid = plant.control_box().midpoint();
    let mut log = Trajectory::with_capacity(run_in + steps);
    let mut ep = Episode {
        outcome: Trajectory::with_capacity(steps),
        ..Default::default()
    };
    for n in 0..run_in + steps {
        let m = plant.measurement().clone();
        let clock = plant.clock();
        let d = weather[n];
        let (control, step_log) = if n < run_in {
            (mid.clone(), None)
        } else {
            let view = LoopView {
                log: &log,
                measurement: &m,
                clock,
                index: n,
                weather,
                config: plant.config(),
            };
            choose(&view)?
        };
        let applied = plant.apply(&control, &d)?;
        log.push(m.state_vector(), applied.clone(), d.to_vec(), clock);
        if n >= run_in {
            let after = plant.measurement();
            ep.outcome.push(after.state_vector(), applied, d.to_vec(), after.timestamp);
            if let Some(s) = step_log {
                if s.failed {
                    ep.violation_steps += 1;
                }
                ep.steps.push(s);
            }
        }
    }
    Ok(ep)
}

/// Lag history ending at the current step.
fn current_history(view: &LoopView, model: &SurrogateModel) -> History {
    let l = model.lags;
    let n = view.log.len();
    let mut x: Vec<Vec<f64>> = view.log.x[n - l.x..n].to_vec();
    x.push(view.measurement.state_vector());
    History {
        x,
        u: view.log.u[n - l.u..n].to_vec(),
        d: view.log.d[n - l.d..n].to_vec(),
    }
}

pub(crate) fn check_channels(model: &SurrogateModel, config: &PlantConfig) -> Result<(), MpcError> {
    let layout = StateLayout::for_plant(config);
    let bx = ControlBox::for_plant(config);
    let dm = model.dims;
    if dm.n_x != layout.len() || dm.n_u != bx.len() || dm.n_d != Disturbance::CHANNELS {
        return Err(MpcError::ChannelMismatch(format!(
            "model has {}/{}/{} channels, plant has {}/{}/{}",
            dm.n_x,
            dm.n_u,
            dm.n_d,
            layout.len(),
            bx.len(),
            Disturbance::CHANNELS
        )));
    }
    Ok(())
}

/// Builds the subproblem at the current step with a perfect (optionally noisy) forecast.
pub fn build_problem<'a>(
    view: &LoopView,
    model: &'a SurrogateModel,
    cfg: &MpcConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<MpcProblem<'a>, MpcError> {
    let h = cfg.horizon;
    let n = view.index;
    if view.weather.len() < n + h {
        return Err(MpcError::Contract(format!(
            "weather ends at {}, forecast needs {}",
            view.weather.len(),
            n + h
        )));
    }
    let mut forecast: Vec<Vec<f64>> = view.weather[n..n + h].iter().map(Disturbance::to_vec).collect();
    if let Some(rng) = rng {
        if cfg.forecast_noise > 0.0 {
            let noise = Normal::new(0.0, cfg.forecast_noise).map_err(|e| MpcError::Contract(e.to_string()))?;
            for d in &mut forecast {
                d[0] += noise.sample(rng);
            }
        }
    }
    let layout = StateLayout::for_plant(view.config);
    let bx = ControlBox::for_plant(view.config);
    let mut bounded: Vec<usize> = layout.zone_channels().collect();
    let supply = layout.supply().zip(cfg.supply_band);
    if let Some((c, _)) = supply {
        bounded.push(c);
    }
    let dt = view.config.sample_period;
    let (mut lo, mut hi) = (Vec::with_capacity(h), Vec::with_capacity(h));
    for k in 0..h {
        let (mut l, mut u) = comfort_bounds(view.clock + (k + 1) as f64 * dt, view.config);
        if let Some((_, (sl, su))) = supply {
            l.push(sl);
            u.push(su);
        }
        lo.push(l);
        hi.push(u);
    }
    let power = vec![layout.heating(), layout.cooling(), layout.fan()];
    let r = cfg.r_diag.clone().unwrap_or_else(|| vec![cfg.smoothness; bx.len()]);
    MpcProblem::new(
        model,
        current_history(view, model),
        bx.lower,
        bx.upper,
        forecast,
        bounded,
        lo,
        hi,
        power,
        cfg.gamma,
        r,
    )
}

pub fn solve(problem: &MpcProblem, init: &ControlPlan, cfg: &MpcConfig) -> Result<SolveResult, MpcError> {
    let run = |flat: &[f64]| match cfg.solver {
        SolverKind::Gdm => solve_gdm(problem, flat, &cfg.gdm),
        SolverKind::Sqp => solve_sqp(problem, flat, &cfg.sqp),
    };
    let flat = init.flatten();
    let first = run(&flat)?;
    let mid = problem.midpoint_plan().flatten();
    if !cfg.midpoint_restart || mid == flat {
        return Ok(first);
    }
    let second = run(&mid)?;
    let (iterations, wall_time) = (first.iterations + second.iterations, first.wall_time + second.wall_time);
    let mut best = if second.cost < first.cost { second } else { first };
    best.iterations = iterations;
    best.wall_time = wall_time;
    Ok(best)
}

/// Closed-loop MPC: plan `H` steps, apply the first control, repeat.
///
/// The plant first runs `max lag` steps at the box midpoint so the model has a full
/// history. A failed solve holds the previous control and is counted in
/// `violation_steps`.
pub fn receding_horizon(
    plant: &mut Plant,
    model: &SurrogateModel,
    weather: &[Disturbance],
    steps: usize,
    cfg: &MpcConfig,
) -> Result<Episode, MpcError> {
    cfg.validate()?;
    check_channels(model, plant.config())?;
    if steps == 0 {
        return Ok(Episode::default());
    }
    let run_in = model.lags.max();
    if weather.len() < run_in + steps + cfg.horizon - 1 {
        return Err(MpcError::Contract(format!(
            "weather has {} entries, episode needs {}",
            weather.len(),
            run_in + steps + cfg.horizon - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prev: Option<SolveResult> = None;
    let mut last_applied: Option<Vec<f64>> = None;
    let n_u = model.dims.n_u;
    run_loop(plant, weather, run_in, steps, |view| {
        let problem = build_problem(view, model, cfg, Some(&mut rng))?;
        let init = warm_start(prev.as_ref(), &problem);
        let init_flat = init.flatten();
        let (control, log) = match solve(&problem, &init, cfg) {
            Ok(res) => {
                let u = res.plan[..n_u].to_vec();
                (u, StepLog { init_plan: init_flat, result: res, failed: false })
            }
            Err(e) => {
                log::warn!("solve failed at step {}: {e}; holding previous control", view.index);
                let u = last_applied.clone().unwrap_or_else(|| problem.midpoint_plan().rows[0].clone());
                let res = SolveResult {
                    plan: init_flat.clone(),
                    cost: f64::NAN,
                    iterations: 0,
                    wall_time: 0.0,
                    converged: false,
                    cost_trace: Vec::new(),
                };
                (u, StepLog { init_plan: init_flat, result: res, failed: true })
            }
        };
        prev = Some(log.result.clone());
        last_applied = Some(control.clone());
        Ok((control, Some(log)))
    })
}

/// Uniform random controls from the box, seeded.
pub fn random_policy(seed: u64) -> impl FnMut(&LoopView) -> Result<Decision, MpcError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    move |view| {
        let bx = ControlBox::for_plant(view.config);
        let u = bx
            .lower
            .iter()
            .zip(&bx.upper)
            .map(|(&l, &h)| rng.random_range(l..=h))
            .collect();
        Ok((u, None))
    }
}

/// Full airflow with full heating below the middle of the comfort band and full
/// cooling above it.
pub fn max_conditioning_policy() -> impl FnMut(&LoopView) -> Result<Decision, MpcError> {
    move |view| {
        let cfg = view.config;
        let (lo, hi) = cfg.comfort().band(view.clock);
        let mid = 0.5 * (lo + hi);
        let temps = &view.measurement.zone_temperatures;
        let u = if cfg.is_multizone() {
            let n = cfg.zone_count;
            let mut u: Vec<f64> = vec![1.0; n];
            u.extend(temps.iter().map(|&t| if t < mid { 1.0 } else { 0.0 }));
            let mean = temps.iter().sum::<f64>() / n as f64;
            let heat = mean < mid;
            u.push(if heat { 1.0 } else { 0.0 });
            u.push(if heat { 0.0 } else { 1.0 });
            u
        } else {
            vec![1.0, if temps[0] < mid { 40.0 } else { 12.0 }]
        };
        Ok((u, None))
    }
}

/// Runs a fixed policy after the same run-in the MPC loop would use.
pub fn run_policy<F>(
    plant: &mut Plant,
    weather: &[Disturbance],
    run_in: usize,
    steps: usize,
    policy: F,
) -> Result<Episode, MpcError>
where
    F: FnMut(&LoopView) -> Result<Decision, MpcError>,
{
    run_loop(plant, weather, run_in, steps, policy)
}
