use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qmeta::harness::{self, linear_fit, ExperimentConfig, OptimizerChoice};
use qmeta::qnn::ShotBudget;
use qmeta::{Error, Result};

#[derive(Parser)]
#[command(name = "qmeta", version, about = "Gradient-free meta-optimization of variational quantum circuits")]
struct Cli {
    /// Experiment config file. Repeat for commands that take several runs.
    #[arg(long, global = true)]
    config: Vec<PathBuf>,

    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `run.out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// `exact` or a shot count per circuit execution.
    #[arg(long, global = true)]
    shots: Option<ShotBudget>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace and summary.
    Run,
    /// Run several optimizers on the same problem.
    Compare,
    /// Median per-epoch wall time over dataset sizes.
    TimeProfile {
        #[arg(long, value_delimiter = ',', default_values_t = vec![100, 200, 400, 600, 800])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values = ["meta", "adam"])]
        optimizers: Vec<OptimizerChoice>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Meta-optimizer against SPSA on the data-free observable cost.
    SpsaBench,
    /// Compare zero, uniform and normal hidden-state initializations.
    AblateInit,
    /// Write the configured dataset as CSV.
    GenData,
}

fn load_configs(cli: &Cli) -> Result<Vec<ExperimentConfig>> {
    let mut configs = if cli.config.is_empty() {
        vec![ExperimentConfig::default()]
    } else {
        cli.config.iter().map(ExperimentConfig::from_file).collect::<Result<Vec<_>>>()?
    };
    for cfg in &mut configs {
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &cli.out_dir {
            cfg.out_dir = dir.clone();
        }
        if let Some(shots) = cli.shots {
            cfg.shots = shots;
        }
    }
    Ok(configs)
}

fn single(configs: Vec<ExperimentConfig>) -> Result<ExperimentConfig> {
    let mut it = configs.into_iter();
    match (it.next(), it.next()) {
        (Some(cfg), None) => Ok(cfg),
        _ => Err(Error::Config("this command takes exactly one --config".into())),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let configs = load_configs(cli)?;
    match &cli.command {
        Command::Run => {
            let cfg = single(configs)?;
            let out = harness::run(&cfg)?;
            println!("{}", to_json(&out.summary));
            eprintln!("trace written to {}", harness::trace_path(&cfg).display());
        }
        Command::Compare => {
            let cmp = harness::compare(&configs)?;
            println!("{:<24} {:<8} {:>12} {:>14} {:>12}", "run_id", "opt", "final_cost", "evals_to_final", "total_evals");
            for row in &cmp.table {
                println!(
                    "{:<24} {:<8} {:>12.6} {:>14} {:>12}",
                    row.run_id, row.optimizer, row.final_cost, row.evals_to_final, row.total_circuit_evals
                );
            }
        }
        Command::TimeProfile { sizes, optimizers, reps } => {
            let cfg = single(configs)?;
            let rows = harness::time_profile(&cfg, sizes, optimizers, *reps)?;
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("time_profile.csv");
            harness::write_csv_rows(&path, &rows)?;
            println!("{:>6} {:<8} {:>12} {:>10}", "m", "opt", "epoch_ms", "evals");
            for r in &rows {
                println!("{:>6} {:<8} {:>12.4} {:>10}", r.size, r.optimizer, r.epoch_ms, r.evals_per_epoch);
            }
            if sizes.len() >= 2 {
                for opt in optimizers {
                    let name = opt.to_string();
                    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                        .iter()
                        .filter(|r| r.optimizer == name)
                        .map(|r| (r.size as f64, r.epoch_ms))
                        .unzip();
                    let (slope, _, r2) = linear_fit(&xs, &ys)?;
                    println!("{name}: {slope:.3e} ms per point (r² = {r2:.3})");
                }
            }
            eprintln!("table written to {}", path.display());
        }
        Command::SpsaBench => {
            let cfg = single(configs)?;
            let (meta, spsa) = harness::spsa_benchmark(&cfg)?;
            println!("{}", to_json(&[meta.summary, spsa.summary]));
        }
        Command::AblateInit => {
            let runs = harness::ablate_hidden_init(&configs)?;
            let summaries: Vec<_> = runs.into_iter().map(|r| r.summary).collect();
            println!("{}", to_json(&summaries));
        }
        Command::GenData => {
            let cfg = single(configs)?;
            let path = harness::gen_data(&cfg)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
