//! Experiment runners: single runs, comparisons, timing, the SPSA benchmark
//! and the hidden-state ablation.
//!
//! Each run writes `<out_dir>/<run_id>.trace.csv` with the header
//! `run_id,step,meta_iter,cost,circuit_evals,wall_time_ms` (one row per cost
//! evaluation of the optimizer loop, `meta_iter` empty for non-meta runs) and
//! `<out_dir>/<run_id>.summary.json`.

mod config;
mod output;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::ansatz::{build_layered, build_spheres, build_strongly_entangling, AnsatzSpec, Family};
use crate::baseline::OptimizerState;
use crate::baseline::OptimizerKind;
use crate::datasets::{gen_gaussian, gen_spheres, gen_spirals, load_iris_binary, read_iris_binary, LabeledDataset};
use crate::estimators::{cost_and_gradient, spsa_gradient, ShiftRule};
use crate::meta::{HiddenInit, LstmWeights, MetaOptimizer};
use crate::qnn::{CostModel, EvalCounter, ObservableModel, QnnModel};
use crate::{seeded_rng, Error, Result};

pub use config::{AnsatzConfig, DatasetConfig, DatasetKind, ExperimentConfig, OptimizerChoice};
pub use output::{linear_fit, read_trace, write_csv_rows, TraceWriter};

const BUNDLED_IRIS: &str = include_str!("../../data/iris.csv");

/// Random stream for the initial parameters θ⁰, shared by every optimizer.
pub const STREAM_INIT: u64 = 1;
/// Random stream for the initial Φ.
pub const STREAM_PHI: u64 = 2;
/// Random stream consumed inside the optimizer loop.
pub const STREAM_OPTIMIZER: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub run_id: String,
    pub step: usize,
    pub meta_iter: Option<usize>,
    pub cost: f64,
    pub circuit_evals: u64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub optimizer: String,
    pub dataset: String,
    pub num_params: usize,
    pub num_points: usize,
    /// Cost at the returned parameters.
    pub final_cost: f64,
    /// Lowest cost in the trace.
    pub best_cost: f64,
    pub total_circuit_evals: u64,
    pub total_wall_time_ms: f64,
    pub epoch_wall_time_ms: f64,
    pub steps: usize,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Vec<TraceRecord>,
    pub final_theta: Vec<f64>,
    /// Trained Φ for meta runs.
    pub phi: Option<LstmWeights>,
}

/// The optimizee of a config plus the dataset it was built from.
pub struct Problem {
    pub model: Box<dyn CostModel>,
    pub dataset: Option<LabeledDataset>,
    pub ansatz: AnsatzSpec,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Option<LabeledDataset>> {
    let d = &cfg.dataset;
    let seed = cfg.dataset_seed();
    let pair = (d.classes.0.as_str(), d.classes.1.as_str());
    let data = match d.kind {
        DatasetKind::Gaussian => gen_gaussian(&d.gaussian, seed)?,
        DatasetKind::Spirals => gen_spirals(d.n_per_class, d.noise, seed)?,
        DatasetKind::Spheres => gen_spheres(d.n_per_class, d.r_inner, d.r_outer, seed)?,
        DatasetKind::Iris => match &d.path {
            Some(path) => load_iris_binary(path, pair)?,
            None => read_iris_binary(BUNDLED_IRIS.as_bytes(), pair)?,
        },
        DatasetKind::None => return Ok(None),
    };
    Ok(Some(data))
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let dataset = load_dataset(cfg)?;
    let a = &cfg.ansatz;
    let mut spec = match a.family {
        Family::LayeredRxRy => {
            let q = match (a.qubits, &dataset) {
                (Some(q), _) => q,
                (None, Some(data)) => data.dim(),
                (None, None) => return Err(Error::config("the layered ansatz needs a dataset")),
            };
            build_layered(q, a.layers)?
        }
        Family::SpheresRy => build_spheres(a.layers)?,
        Family::StronglyEntangling => build_strongly_entangling(a.qubits.unwrap_or(2), a.layers)?,
    };
    match (&a.observable, a.reduction) {
        (Some(qs), r) => {
            let reduction = r.unwrap_or(spec.reduction());
            spec = spec.with_observable(qs.clone(), reduction)?;
        }
        (None, Some(r)) => spec = spec.with_reduction(r)?,
        (None, None) => {}
    }
    let model: Box<dyn CostModel> = match (&dataset, spec.embeds_data()) {
        (Some(data), true) => Box::new(QnnModel::new(spec.clone(), data.clone())?),
        (None, false) => Box::new(ObservableModel::new(spec.clone())?),
        (Some(_), false) => {
            return Err(Error::config(format!("{} has no data embedding; set dataset.kind = none", a.family_name())))
        }
        (None, true) => return Err(Error::config("this ansatz embeds data; choose a dataset")),
    };
    Ok(Problem { model, dataset, ansatz: spec })
}

impl AnsatzConfig {
    fn family_name(&self) -> &'static str {
        match self.family {
            Family::LayeredRxRy => "the layered ansatz",
            Family::SpheresRy => "the spheres ansatz",
            Family::StronglyEntangling => "the strongly entangling ansatz",
        }
    }
}

/// `θ⁰ ~ N(0, init_std²)` from the init stream of the run seed.
pub fn initial_theta(cfg: &ExperimentConfig, num_params: usize) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::config(format!("optimizer.init_std: {e}")))?;
    let mut rng = seeded_rng(cfg.seed, STREAM_INIT);
    Ok((0..num_params).map(|_| normal.sample(&mut rng)).collect())
}

/// Runs the configured optimizer in memory. `sink` sees every trace row as
/// soon as it exists.
pub fn execute(cfg: &ExperimentConfig, mut sink: impl FnMut(&TraceRecord) -> Result<()>) -> Result<RunOutput> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let model = problem.model.as_ref();
    let theta0 = initial_theta(cfg, model.num_params())?;
    let counter = EvalCounter::new();
    let mut rng = seeded_rng(cfg.seed, STREAM_OPTIMIZER);
    let mut trace = Vec::new();
    let mut phi = None;

    let mut emit = |trace: &mut Vec<TraceRecord>, record: TraceRecord| -> Result<()> {
        sink(&record)?;
        trace.push(record);
        Ok(())
    };

    let start = Instant::now();
    let elapsed_ms = |start: &Instant| start.elapsed().as_secs_f64() * 1e3;
    let (final_theta, final_cost, status) = match cfg.optimizer {
        OptimizerChoice::Meta => {
            let mut meta = match &cfg.meta_checkpoint {
                Some(path) => {
                    let file = File::open(path)
                        .map_err(|e| Error::input(format!("cannot open checkpoint {}: {e}", path.display())))?;
                    let weights = LstmWeights::load_json(std::io::BufReader::new(file))?;
                    MetaOptimizer::with_weights(cfg.meta.clone(), weights)?
                }
                None => MetaOptimizer::new(cfg.meta.clone(), model.num_params(), &mut seeded_rng(cfg.seed, STREAM_PHI))?,
            };
            let outcome = meta.train(model, &theta0, cfg.shots, &counter, &mut rng, |s| {
                emit(
                    &mut trace,
                    TraceRecord {
                        run_id: cfg.run_id.clone(),
                        step: s.step,
                        meta_iter: Some(s.meta_iter),
                        cost: s.cost,
                        circuit_evals: s.circuit_evals,
                        wall_time_ms: elapsed_ms(&start),
                    },
                )
            })?;
            log::info!(
                "{}: meta-training stopped after {} meta-iterations ({})",
                cfg.run_id,
                outcome.meta_iterations,
                outcome.status.as_str()
            );
            phi = Some(meta.weights().clone());
            (outcome.best_theta, outcome.best_cost, outcome.status.as_str().to_string())
        }
        OptimizerChoice::Gradient(kind) => {
            let mut theta = theta0;
            let mut opt = OptimizerState::new(kind, theta.len(), cfg.lr)?;
            for step in 0..cfg.iterations {
                let (cost, grad) = cost_and_gradient(model, &theta, ShiftRule::default(), cfg.shots, &counter, &mut rng)?;
                emit(&mut trace, record(cfg, step, cost, &counter, elapsed_ms(&start)))?;
                opt.step(&mut theta, &grad)?;
            }
            let final_cost = model.cost(&theta, cfg.shots, &EvalCounter::new(), &mut rng)?;
            (theta, final_cost, "completed".to_string())
        }
        OptimizerChoice::Spsa => {
            let mut theta = theta0;
            let mut opt = OptimizerState::new(OptimizerKind::Sgd, theta.len(), cfg.lr)?;
            for step in 0..cfg.iterations {
                let (grad, cost) = spsa_gradient(model, &theta, cfg.spsa, step, cfg.shots, &counter, &mut rng)?;
                emit(&mut trace, record(cfg, step, cost, &counter, elapsed_ms(&start)))?;
                opt.step(&mut theta, &grad)?;
            }
            let final_cost = model.cost(&theta, cfg.shots, &EvalCounter::new(), &mut rng)?;
            (theta, final_cost, "completed".to_string())
        }
    };
    let total_ms = elapsed_ms(&start);
    let steps = trace.len();
    let best_cost = trace.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
    let summary = RunSummary {
        run_id: cfg.run_id.clone(),
        optimizer: cfg.optimizer.to_string(),
        dataset: cfg.dataset.kind.to_string(),
        num_params: model.num_params(),
        num_points: model.num_points(),
        final_cost,
        best_cost,
        total_circuit_evals: counter.get(),
        total_wall_time_ms: total_ms,
        epoch_wall_time_ms: if steps > 0 { total_ms / steps as f64 } else { 0.0 },
        steps,
        status,
    };
    Ok(RunOutput {
        summary,
        trace,
        final_theta,
        phi,
    })
}

fn record(cfg: &ExperimentConfig, step: usize, cost: f64, counter: &EvalCounter, wall_time_ms: f64) -> TraceRecord {
    TraceRecord {
        run_id: cfg.run_id.clone(),
        step,
        meta_iter: None,
        cost,
        circuit_evals: counter.get(),
        wall_time_ms,
    }
}

pub fn trace_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(format!("{}.trace.csv", cfg.run_id))
}

pub fn summary_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(format!("{}.summary.json", cfg.run_id))
}

pub fn checkpoint_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join(format!("{}.phi.json", cfg.run_id))
}

/// Executes a run and persists its trace and summary. On failure the rows
/// produced so far are flushed before the error is returned.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut writer = TraceWriter::create(trace_path(cfg))?;
    let result = execute(cfg, |r| writer.write(r));
    writer.finish()?;
    let out = result?;
    let file = BufWriter::new(File::create(summary_path(cfg))?);
    serde_json::to_writer_pretty(file, &out.summary).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    if cfg.save_checkpoint {
        if let Some(phi) = &out.phi {
            phi.save_json(BufWriter::new(File::create(checkpoint_path(cfg))?))?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run_id: String,
    pub optimizer: String,
    pub final_cost: f64,
    /// Evaluations at the first trace row reaching the final cost, or the
    /// total when no row does.
    pub evals_to_final: u64,
    pub total_circuit_evals: u64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<RunOutput>,
    pub table: Vec<ComparisonRow>,
}

#[derive(Serialize)]
struct SeriesRow<'a> {
    run_id: &'a str,
    optimizer: &'a str,
    step: usize,
    circuit_evals: u64,
    cost: f64,
}

fn write_series(path: &Path, runs: &[RunOutput]) -> Result<()> {
    let mut rows = Vec::new();
    for run in runs {
        let mut series: Vec<&TraceRecord> = run.trace.iter().collect();
        series.sort_by_key(|r| r.circuit_evals);
        rows.extend(series.into_iter().map(|r| SeriesRow {
            run_id: &run.summary.run_id,
            optimizer: &run.summary.optimizer,
            step: r.step,
            circuit_evals: r.circuit_evals,
            cost: r.cost,
        }));
    }
    write_csv_rows(path, &rows)
}

/// Runs several optimizers on one problem and writes `compare.csv` (cost
/// against circuit evaluations, one series per run) plus
/// `compare_summary.csv` into the first config's output directory.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(Error::config("compare needs at least two configs"));
    }
    let key = configs[0].problem_key();
    if let Some(other) = configs.iter().find(|c| c.problem_key() != key) {
        return Err(Error::config(format!(
            "run `{}` uses a different dataset, ansatz or shot budget than `{}`",
            other.run_id, configs[0].run_id
        )));
    }
    for (i, c) in configs.iter().enumerate() {
        if configs[..i].iter().any(|p| p.run_id == c.run_id && p.out_dir == c.out_dir) {
            return Err(Error::config(format!("duplicate run id `{}`", c.run_id)));
        }
    }
    let runs: Vec<RunOutput> = configs.par_iter().map(run).collect::<Result<_>>()?;
    let table = runs
        .iter()
        .map(|r| {
            let evals_to_final = r
                .trace
                .iter()
                .find(|t| t.cost <= r.summary.final_cost)
                .map_or(r.summary.total_circuit_evals, |t| t.circuit_evals);
            ComparisonRow {
                run_id: r.summary.run_id.clone(),
                optimizer: r.summary.optimizer.clone(),
                final_cost: r.summary.final_cost,
                evals_to_final,
                total_circuit_evals: r.summary.total_circuit_evals,
            }
        })
        .collect::<Vec<_>>();
    let dir = &configs[0].out_dir;
    write_series(&dir.join("compare.csv"), &runs)?;
    write_csv_rows(dir.join("compare_summary.csv"), &table)?;
    Ok(Comparison { runs, table })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub size: usize,
    pub optimizer: String,
    /// Median over repetitions.
    pub epoch_ms: f64,
    pub evals_per_epoch: u64,
}

/// Median per-epoch wall time for every (size, optimizer) pair. Runs are
/// sequential so timings do not compete for cores.
pub fn time_profile(
    base: &ExperimentConfig,
    sizes: &[usize],
    optimizers: &[OptimizerChoice],
    repetitions: usize,
) -> Result<Vec<ProfileRow>> {
    if sizes.is_empty() || optimizers.is_empty() {
        return Err(Error::config("time profiling needs at least one size and one optimizer"));
    }
    if repetitions == 0 {
        return Err(Error::config("time profiling needs at least one repetition"));
    }
    let mut rows = Vec::with_capacity(sizes.len() * optimizers.len());
    for &size in sizes {
        for &optimizer in optimizers {
            let mut cfg = base.clone();
            cfg.optimizer = optimizer;
            cfg.dataset.set_total_points(size)?;
            let mut times = Vec::with_capacity(repetitions);
            let mut evals_per_epoch = 0;
            for _ in 0..repetitions {
                let out = execute(&cfg, |_| Ok(()))?;
                times.push(out.summary.epoch_wall_time_ms);
                evals_per_epoch = out.summary.total_circuit_evals / out.summary.steps as u64;
            }
            times.sort_by(f64::total_cmp);
            let mid = times.len() / 2;
            let epoch_ms = if times.len() % 2 == 1 {
                times[mid]
            } else {
                0.5 * (times[mid - 1] + times[mid])
            };
            log::info!("m = {size}, {optimizer}: {epoch_ms:.3} ms per epoch");
            rows.push(ProfileRow {
                size,
                optimizer: optimizer.to_string(),
                epoch_ms,
                evals_per_epoch,
            });
        }
    }
    Ok(rows)
}

/// Meta-optimizer against SPSA on a data-free observable cost. Writes both
/// traces and `spsa_bench.csv`.
pub fn spsa_benchmark(cfg: &ExperimentConfig) -> Result<(RunOutput, RunOutput)> {
    if cfg.ansatz.family != Family::StronglyEntangling || cfg.dataset.kind != DatasetKind::None {
        return Err(Error::config(
            "the SPSA benchmark needs ansatz.family = strongly_entangling and dataset.kind = none",
        ));
    }
    let mut meta_cfg = cfg.clone();
    meta_cfg.optimizer = OptimizerChoice::Meta;
    meta_cfg.run_id = format!("{}-meta", cfg.run_id);
    let mut spsa_cfg = cfg.clone();
    spsa_cfg.optimizer = OptimizerChoice::Spsa;
    spsa_cfg.run_id = format!("{}-spsa", cfg.run_id);
    let meta = run(&meta_cfg)?;
    let spsa = run(&spsa_cfg)?;
    log::info!(
        "SPSA: {} steps, {} evaluations ({} per step); meta: {} steps, {} evaluations ({} per step)",
        spsa.summary.steps,
        spsa.summary.total_circuit_evals,
        spsa.summary.total_circuit_evals / spsa.summary.steps.max(1) as u64,
        meta.summary.steps,
        meta.summary.total_circuit_evals,
        meta.summary.total_circuit_evals / meta.summary.steps.max(1) as u64,
    );
    write_series(&cfg.out_dir.join("spsa_bench.csv"), &[meta.clone(), spsa.clone()])?;
    Ok((meta, spsa))
}

/// Meta runs for every hidden-state initialization on every config's
/// dataset. Run ids get the scheme appended; `ablation.csv` collects all
/// series.
pub fn ablate_hidden_init(configs: &[ExperimentConfig]) -> Result<Vec<RunOutput>> {
    if configs.is_empty() {
        return Err(Error::config("the ablation needs at least one config"));
    }
    if let Some(c) = configs.iter().find(|c| c.optimizer != OptimizerChoice::Meta) {
        return Err(Error::config(format!("run `{}` does not use the meta optimizer", c.run_id)));
    }
    let mut jobs = Vec::new();
    for c in configs {
        for init in [HiddenInit::Zero, HiddenInit::Uniform01, HiddenInit::Normal01] {
            let mut job = c.clone();
            job.meta.h0_init = init;
            job.run_id = format!("{}-{init}", c.run_id);
            jobs.push(job);
        }
    }
    let runs: Vec<RunOutput> = jobs.par_iter().map(run).collect::<Result<_>>()?;
    write_series(&configs[0].out_dir.join("ablation.csv"), &runs)?;
    Ok(runs)
}

/// Writes the configured dataset as CSV and returns the file path.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let data = load_dataset(cfg)?.ok_or_else(|| Error::config("dataset.kind = none has no data to write"))?;
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("{}-{}.csv", data.name(), cfg.dataset_seed()));
    data.write_csv(BufWriter::new(File::create(&path)?))?;
    Ok(path)
}
