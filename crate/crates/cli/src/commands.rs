use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hvac_mpc::dataio::{generate, load_trajectories, save_trajectories, SplitManifest};
use hvac_mpc::kpi::{append_results_row, KpiReport};
use hvac_mpc::mpc::{receding_horizon, Episode};
use hvac_mpc::plant::{make_weather, ControlBox, StateLayout};
use hvac_mpc::surrogate::{dataset_mse, evaluate, load_checkpoint, save_checkpoint, train, LstmRollout};
use hvac_mpc::{
    Dataset, LagSpec, ModelKind, MpcConfig, Normalizer, Plant, PlantConfig, SolverKind, SurrogateModel, Trajectory,
};

use crate::config::{resolve_plant, PlantPreset, Preset};
use crate::CliError;

pub const SPLIT_FILE: &str = "split.json";
pub const PLANT_FILE: &str = "plant.json";
pub const RESULTS_FILE: &str = "results.csv";

fn ensure_dir(p: &Path) -> Result<(), CliError> {
    fs::create_dir_all(p).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))
}

fn require_file(p: &Path, what: &str) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist", p.display())))
    }
}

fn require_dir(p: &Path, what: &str) -> Result<(), CliError> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{what} {} does not exist", p.display())))
    }
}

/// `<stem>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn trajectory_file(dir: &Path, id: usize) -> PathBuf {
    dir.join(format!("traj_{id:03}.csv"))
}

// ---------------------------------------------------------------------------- generate

#[derive(Args, Debug, Clone)]
pub struct GenerateArgs {
    /// Plant config JSON; defaults to the built-in plant chosen by --plant.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlantPreset::SingleZone)]
    pub plant: PlantPreset,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// Overrides the preset's trajectory count.
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Overrides the preset's steps per trajectory.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerateSummary {
    pub files: Vec<PathBuf>,
    pub split: SplitManifest,
}

/// Excites the plant with random controls and writes one CSV per trajectory, the
/// split manifest and the plant config.
pub fn cmd_generate(a: &GenerateArgs) -> Result<GenerateSummary, CliError> {
    let cfg = resolve_plant(a.config.as_deref(), a.plant)?;
    cfg.validate()?;
    let k = a.trajectories.unwrap_or(a.preset.trajectories());
    let steps = a.steps.unwrap_or(a.preset.steps());
    let split = SplitManifest::for_count(k)?;
    let trajs = generate(&cfg, k, steps, a.seed)?;
    ensure_dir(&a.out)?;
    let mut files = Vec::with_capacity(k);
    for tr in &trajs {
        let p = trajectory_file(&a.out, tr.id);
        save_trajectories(&p, std::slice::from_ref(tr))?;
        files.push(p);
    }
    split.save(a.out.join(SPLIT_FILE))?;
    fs::write(a.out.join(PLANT_FILE), cfg.to_json())?;
    Ok(GenerateSummary { files, split })
}

/// Trajectories of a generated data directory, ordered by id, plus its manifest.
pub fn load_data_dir(dir: &Path) -> Result<(Vec<Trajectory>, SplitManifest), CliError> {
    require_dir(dir, "data directory")?;
    let manifest = dir.join(SPLIT_FILE);
    require_file(&manifest, "split manifest")?;
    let split = SplitManifest::load(&manifest)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("traj_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    let mut trajs = Vec::new();
    for p in paths {
        trajs.extend(load_trajectories(&p)?);
    }
    trajs.sort_by_key(|t| t.id);
    let ids: Vec<usize> = trajs.iter().map(|t| t.id).collect();
    for id in split.train.iter().chain(&split.val).chain(&split.test) {
        if ids.binary_search(id).is_err() {
            return Err(CliError::usage(format!("manifest lists trajectory {id}, which is missing")));
        }
    }
    Ok((trajs, split))
}

fn subset(trajs: &[Trajectory], ids: &[usize]) -> Vec<Trajectory> {
    trajs.iter().filter(|t| ids.contains(&t.id)).cloned().collect()
}

// ---------------------------------------------------------------------------- train

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RolloutArg {
    Carry,
    Reencode,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: ModelKind,
    /// Lag orders `Mx,Mu,Md`.
    #[arg(long, default_value = "1,1,1")]
    pub lags: LagSpec,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// How the LSTM advances over multi-step rollouts.
    #[arg(long, value_enum)]
    pub lstm_rollout: Option<RolloutArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: ModelKind,
    pub lags: LagSpec,
    pub train_mse: f64,
    pub val_mse: f64,
    /// One-step error on the test split.
    pub test_mse: f64,
    pub best_epoch: usize,
}

/// Fits the normalizer on the training split, trains, and writes the checkpoint,
/// `<stem>.loss.csv` and `<stem>.train.json`.
pub fn cmd_train(a: &TrainArgs) -> Result<TrainSummary, CliError> {
    let (trajs, split) = load_data_dir(&a.data)?;
    let tr = subset(&trajs, &split.train);
    let va = subset(&trajs, &split.val);
    let te = subset(&trajs, &split.test);
    let dims = tr
        .first()
        .and_then(Trajectory::dims)
        .ok_or_else(|| CliError::usage("training split is empty"))?;
    let normalizer = Normalizer::fit(&tr)?;
    let mut arch = a.preset.architecture();
    if let Some(w) = a.width {
        arch.width = w;
        arch.hidden = w;
    }
    if let Some(r) = a.lstm_rollout {
        arch.lstm_rollout = match r {
            RolloutArg::Carry => LstmRollout::Carry,
            RolloutArg::Reencode => LstmRollout::Reencode,
        };
    }
    let mut tc = a.preset.train_config();
    tc.seed = a.seed;
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        tc.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        tc.batch_size = b;
    }
    let d_tr = Dataset::from_trajectories(&tr, a.lags);
    let d_va = Dataset::from_trajectories(&va, a.lags);
    let d_te = Dataset::from_trajectories(&te, a.lags);
    if d_tr.is_empty() {
        return Err(CliError::usage(format!("no training windows for lags {}", a.lags)));
    }
    let model = SurrogateModel::new(a.model, a.lags, dims, normalizer, arch, a.seed)?;
    let (model, curve) = train(model, &d_tr, (!d_va.is_empty()).then_some(&d_va), &tc)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_checkpoint(&a.out, &model)?;
    curve.write_csv(sibling(&a.out, "loss.csv"))?;
    let summary = TrainSummary {
        model: a.model,
        lags: a.lags,
        train_mse: dataset_mse(&model, &d_tr)?,
        val_mse: if d_va.is_empty() { f64::NAN } else { dataset_mse(&model, &d_va)? },
        test_mse: if d_te.is_empty() { f64::NAN } else { dataset_mse(&model, &d_te)? },
        best_epoch: curve.best_epoch,
    };
    fs::write(
        sibling(&a.out, "train.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::runtime(e.to_string()))?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------- eval

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    /// Rollout CSV; defaults to `<ckpt stem>.rollout.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub mse: f64,
    pub starts: usize,
    pub csv: PathBuf,
}

/// Multi-step error on the test split and a `start_t,step,channel,predicted,true` CSV.
pub fn cmd_eval(a: &EvalArgs) -> Result<EvalSummary, CliError> {
    if a.horizon < 1 {
        return Err(CliError::usage("horizon must be at least 1"));
    }
    require_file(&a.ckpt, "checkpoint")?;
    let model = load_checkpoint(&a.ckpt, None)?;
    let (trajs, split) = load_data_dir(&a.data)?;
    let te = subset(&trajs, &split.test);
    let report = evaluate(&model, &te, a.horizon)?;
    let csv_path = a.out.clone().unwrap_or_else(|| sibling(&a.ckpt, "rollout.csv"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::runtime(e.to_string()))?;
    w.write_record(["start_t", "step", "channel", "predicted", "true"])
        .map_err(|e| CliError::runtime(e.to_string()))?;
    for tr in &te {
        let starts = hvac_mpc::surrogate::admissible_starts(tr.len(), model.lags, a.horizon);
        let preds = model.rollout_starts(tr, &starts, a.horizon)?;
        for (&t, p) in starts.iter().zip(&preds) {
            for (k, row) in p.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    w.write_record([
                        tr.t[t].to_string(),
                        (k + 1).to_string(),
                        c.to_string(),
                        v.to_string(),
                        tr.x[t + k + 1][c].to_string(),
                    ])
                    .map_err(|e| CliError::runtime(e.to_string()))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(EvalSummary {
        mse: report.mse,
        starts: report.starts,
        csv: csv_path,
    })
}

// ---------------------------------------------------------------------------- mpc

#[derive(Args, Debug, Clone)]
pub struct MpcArgs {
    /// Checkpoint file, or with --sweep a directory holding `linear.json`,
    /// `mlp.json` and `lstm.json`.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, required_unless_present = "sweep")]
    pub solver: Option<SolverKind>,
    #[arg(long, default_value_t = 2)]
    pub days: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Run every model and solver combination.
    #[arg(long)]
    pub sweep: bool,
    /// Plant config JSON; defaults to the built-in plant chosen by --plant.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PlantPreset::SingleZone)]
    pub plant: PlantPreset,
    /// Controller settings JSON.
    #[arg(long)]
    pub mpc_config: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Weather seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 21.0)]
    pub initial_temperature: f64,
}

/// One closed-loop run and its scores.
#[derive(Clone, Debug)]
pub struct MpcRun {
    pub model: ModelKind,
    pub solver: SolverKind,
    pub kpi: KpiReport,
    pub episode: Episode,
    pub dir: PathBuf,
}

pub fn episode_steps(cfg: &PlantConfig, days: usize) -> usize {
    (days as f64 * 86_400.0 / cfg.sample_period).round() as usize
}

/// Runs one closed-loop episode and writes `episode.csv`, `kpi.json` and `plant.json`
/// under `dir`.
pub fn run_episode(
    model: &SurrogateModel,
    plant_cfg: &PlantConfig,
    mpc: &MpcConfig,
    days: usize,
    weather_seed: u64,
    initial_temperature: f64,
    dir: &Path,
) -> Result<(Episode, KpiReport), CliError> {
    if days == 0 {
        return Err(CliError::usage("days must be at least 1"));
    }
    let steps = episode_steps(plant_cfg, days);
    let weather = make_weather(&plant_cfg.weather, &plant_cfg.occupancy, weather_seed, days + 1, plant_cfg.sample_period)?;
    let mut plant = Plant::new(plant_cfg.clone(), initial_temperature)?;
    let episode = receding_horizon(&mut plant, model, &weather, steps, mpc)?;
    let kpi = KpiReport::from_episode(&episode, plant_cfg)?;
    ensure_dir(dir)?;
    episode.write_csv(dir.join("episode.csv"))?;
    kpi.save_json(dir.join("kpi.json"))?;
    fs::write(dir.join(PLANT_FILE), plant_cfg.to_json())?;
    Ok((episode, kpi))
}

/// The closed loop for one checkpoint and solver, or the full sweep. Result rows are
/// appended to `<out>/results.csv` in model-then-solver order.
pub fn cmd_mpc(a: &MpcArgs) -> Result<Vec<MpcRun>, CliError> {
    let plant_cfg = resolve_plant(a.config.as_deref(), a.plant)?;
    plant_cfg.validate()?;
    let mut mpc = match &a.mpc_config {
        Some(p) => {
            require_file(p, "mpc config")?;
            MpcConfig::load(p)?
        }
        None => MpcConfig::default(),
    };
    if let Some(h) = a.horizon {
        mpc.horizon = h;
    }
    mpc.validate()?;
    let jobs: Vec<(PathBuf, Option<ModelKind>, SolverKind)> = if a.sweep {
        require_dir(&a.ckpt, "checkpoint directory")?;
        let mut jobs = Vec::new();
        for kind in ModelKind::ALL {
            let p = a.ckpt.join(format!("{kind}.json"));
            require_file(&p, "checkpoint")?;
            for s in SolverKind::ALL {
                jobs.push((p.clone(), Some(kind), s));
            }
        }
        jobs
    } else {
        require_file(&a.ckpt, "checkpoint")?;
        let s = a.solver.ok_or_else(|| CliError::usage("--solver is required without --sweep"))?;
        vec![(a.ckpt.clone(), None, s)]
    };
    let models: Vec<SurrogateModel> = jobs
        .iter()
        .map(|(p, k, _)| load_checkpoint(p, *k).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    ensure_dir(&a.out)?;
    let runs: Vec<MpcRun> = jobs
        .par_iter()
        .zip(models.par_iter())
        .map(|((_, _, solver), model)| {
            let cfg = MpcConfig {
                solver: *solver,
                ..mpc.clone()
            };
            let dir = a.out.join(format!("{}_{}", model.kind, solver));
            let (episode, kpi) = run_episode(model, &plant_cfg, &cfg, a.days, a.seed, a.initial_temperature, &dir)?;
            Ok(MpcRun {
                model: model.kind,
                solver: *solver,
                kpi,
                episode,
                dir,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let results = a.out.join(RESULTS_FILE);
    for r in &runs {
        append_results_row(&results, r.model.name(), r.solver.name(), &r.kpi)?;
    }
    Ok(runs)
}

// ---------------------------------------------------------------------------- report

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub solver: String,
    pub power_kwh_m2: f64,
    pub discomfort_kh: f64,
    pub mean_s: f64,
    pub max_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSummary {
    /// Sorted by power, ascending.
    pub rows: Vec<ResultRow>,
    pub table: String,
    pub plots: Vec<PathBuf>,
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let rows: Vec<ResultRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    Ok(rows)
}

fn format_table(rows: &[ResultRow]) -> String {
    let head = ["model", "solver", "power (kWh/m2)", "discomfort (Kh)", "mean time (s)", "max time (s)"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.model.clone(),
                r.solver.clone(),
                format!("{:.4}", r.power_kwh_m2),
                format!("{:.3}", r.discomfort_kh),
                format!("{:.4}", r.mean_s),
                format!("{:.4}", r.max_s),
            ]
        })
        .collect();
    let mut width = head.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    let line = |cells: &[String], s: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&width)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        s.push_str(parts.join("  ").trim_end());
        s.push('\n');
    };
    line(&head.map(String::from), &mut s);
    line(&width.map(|w| "-".repeat(w)), &mut s);
    for row in &body {
        line(row, &mut s);
    }
    s
}

/// `t_sec,zone_temp,lower,upper,u_*,ambient` from an episode CSV. Multi-zone plants
/// report the mean zone temperature.
pub fn write_plot_csv(episode_csv: &Path, plant_cfg: &PlantConfig, out: &Path) -> Result<(), CliError> {
    let mut rdr =
        csv::Reader::from_path(episode_csv).map_err(|e| CliError::usage(format!("{}: {e}", episode_csv.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let zones = StateLayout::for_plant(plant_cfg).zones;
    let bx = ControlBox::for_plant(plant_cfg);
    let missing = |n: &str| CliError::usage(format!("{}: no column {n}", episode_csv.display()));
    let t_col = col("t_sec").ok_or_else(|| missing("t_sec"))?;
    let x_cols: Vec<usize> = (0..zones)
        .map(|i| col(&format!("x_{i}")).ok_or_else(|| missing(&format!("x_{i}"))))
        .collect::<Result<_, _>>()?;
    let u_cols: Vec<usize> = (0..bx.len())
        .map(|i| col(&format!("u_{i}")).ok_or_else(|| missing(&format!("u_{i}"))))
        .collect::<Result<_, _>>()?;
    let amb = col("d_0").ok_or_else(|| missing("d_0"))?;
    let comfort = plant_cfg.comfort();
    let mut w = csv::Writer::from_path(out).map_err(|e| CliError::runtime(e.to_string()))?;
    let mut head = vec!["t_sec".to_string(), "zone_temp".into(), "lower".into(), "upper".into()];
    head.extend(bx.names.iter().cloned());
    head.push("ambient".into());
    w.write_record(&head).map_err(|e| CliError::runtime(e.to_string()))?;
    let num = |r: &csv::StringRecord, i: usize| -> Result<f64, CliError> {
        r[i].parse::<f64>().map_err(|e| CliError::usage(format!("{}: {e}", episode_csv.display())))
    };
    for rec in rdr.records() {
        let rec = rec?;
        let t = num(&rec, t_col)?;
        let mut temp = 0.0;
        for &c in &x_cols {
            temp += num(&rec, c)?;
        }
        temp /= zones as f64;
        let (lo, hi) = comfort.band(t);
        let mut row = vec![t.to_string(), temp.to_string(), lo.to_string(), hi.to_string()];
        for &c in &u_cols {
            row.push(rec[c].to_string());
        }
        row.push(rec[amb].to_string());
        w.write_record(&row).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Comparison table sorted by power plus one plot CSV per run directory.
pub fn cmd_report(a: &ReportArgs) -> Result<ReportSummary, CliError> {
    require_dir(&a.results, "results directory")?;
    let path = a.results.join(RESULTS_FILE);
    if !path.is_file() {
        return Err(CliError::usage(format!("no {RESULTS_FILE} in {}", a.results.display())));
    }
    let mut rows = read_results(&path)?;
    if rows.is_empty() {
        return Err(CliError::usage(format!("{} has no result rows", path.display())));
    }
    rows.sort_by(|a, b| a.power_kwh_m2.total_cmp(&b.power_kwh_m2));
    let table = format_table(&rows);
    let mut out = csv::Writer::from_path(a.results.join("report.csv")).map_err(|e| CliError::runtime(e.to_string()))?;
    for r in &rows {
        out.serialize(r).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    out.flush()?;
    let mut plots = Vec::new();
    let mut seen = BTreeMap::new();
    for r in &rows {
        let dir = a.results.join(format!("{}_{}", r.model, r.solver));
        if seen.insert(dir.clone(), ()).is_some() {
            continue;
        }
        let (ep, pc) = (dir.join("episode.csv"), dir.join(PLANT_FILE));
        if ep.is_file() && pc.is_file() {
            let cfg = PlantConfig::load(&pc)?;
            let p = dir.join("plot.csv");
            write_plot_csv(&ep, &cfg, &p)?;
            plots.push(p);
        }
    }
    Ok(ReportSummary { rows, table, plots })
}
