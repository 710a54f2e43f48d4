//! The `hvac-mpc` command line: `generate`, `train`, `eval`, `mpc` and `report`.
//!
//! Each subcommand is also callable as a function returning its summary, which is
//! how the integration tests drive the pipeline.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_train,
    cmd_eval, cmd_generate, cmd_mpc, cmd_report, episode_steps, load_data_dir, read_results, run_episode,
    write_plot_csv, EvalArgs, EvalSummary, GenerateArgs, GenerateSummary, MpcArgs, MpcRun, ReportArgs, ReportSummary,
    ResultRow, RolloutArg, TrainArgs, TrainSummary, PLANT_FILE, RESULTS_FILE, SPLIT_FILE,
};
pub use config::{resolve_plant, PlantPreset, Preset, RunConfig};
pub use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "hvac-mpc", version, about = "Data-driven MPC for building HVAC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Record random-excitation trajectories from the plant.
    Generate(GenerateArgs),
    /// Fit a surrogate on a generated data directory.
    Train(TrainArgs),
    /// Multi-step prediction error on the test split.
    Eval(EvalArgs),
    /// Closed-loop control episode(s) on the plant.
    Mpc(MpcArgs),
    /// Comparison table and plot data from a results directory.
    Report(ReportArgs),
}

/// Runs one command and prints its human-readable summary.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => {
            let s = cmd_generate(&a)?;
            println!(
                "wrote {} trajectories to {} (train {}, val {}, test {})",
                s.files.len(),
                a.out.display(),
                s.split.train.len(),
                s.split.val.len(),
                s.split.test.len()
            );
        }
        Command::Train(a) => {
            let s = cmd_train(&a)?;
            println!(
                "{} {}: train MSE {:.3} x1e-5, val MSE {:.3} x1e-5, test MSE {:.3} x1e-5 (best epoch {})",
                s.model,
                s.lags,
                s.train_mse * 1e5,
                s.val_mse * 1e5,
                s.test_mse * 1e5,
                s.best_epoch
            );
        }
        Command::Eval(a) => {
            let s = cmd_eval(&a)?;
            println!(
                "test {}-step MSE {:.3} x1e-5 over {} starts; rollouts in {}",
                a.horizon,
                s.mse * 1e5,
                s.starts,
                s.csv.display()
            );
        }
        Command::Mpc(a) => {
            for r in cmd_mpc(&a)? {
                println!(
                    "{} + {}: power {:.4} kWh/m2, discomfort {:.3} Kh, solve {:.3}/{:.3} s mean/max, {} failed steps",
                    r.model,
                    r.solver,
                    r.kpi.total_power,
                    r.kpi.discomfort,
                    r.kpi.mean_solve_time,
                    r.kpi.max_solve_time,
                    r.kpi.violation_steps
                );
            }
        }
        Command::Report(a) => {
            let s = cmd_report(&a)?;
            print!("{}", s.table);
            for p in &s.plots {
                println!("plot data: {}", p.display());
            }
        }
    }
    Ok(())
}
