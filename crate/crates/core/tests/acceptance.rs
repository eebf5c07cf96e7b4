//! End-to-end acceptance suite. Runs as a plain binary so every criterion
//! reports its own PASS/FAIL line even when an earlier one fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use qmeta::estimators::{cost_and_gradient, ShiftRule};
use qmeta::harness::{self, linear_fit, ExperimentConfig, OptimizerChoice, RunOutput};
use qmeta::meta::{LstmState, LstmWeights, MetaConfig, MetaOptimizer, MetaStatus, PhiTraining};
use qmeta::qnn::{CostModel, EvalCounter, ShotBudget};
use qmeta::simulator::{GateOp, Statevector};
use qmeta::{seeded_rng, Result, SimRng};
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Outcome = std::result::Result<String, String>;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run_mem(cfg: &ExperimentConfig) -> RunOutput {
    harness::execute(cfg, |_| Ok(())).unwrap_or_else(|e| panic!("{}: {e}", cfg.run_id))
}

fn per_step_evals(out: &RunOutput) -> Vec<u64> {
    let mut prev = 0;
    out.trace
        .iter()
        .map(|r| {
            let d = r.circuit_evals - prev;
            prev = r.circuit_evals;
            d
        })
        .collect()
}

fn gradient_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let check = common::check_random_draw(seed, 1e-5).map_err(|e| e.to_string())?;
        if check.max_rel_err >= 1e-4 {
            return Err(format!("{} (draw {seed}): relative error {:.3e}", check.description, check.max_rel_err));
        }
        worst = worst.max(check.max_rel_err);
    }
    let model = common::cos_squared_model();
    let counter = EvalCounter::new();
    let mut rng = seeded_rng(0, 0);
    let mut worst_analytic: f64 = 0.0;
    for k in 0..200 {
        let t = -3.1 + 0.031 * k as f64;
        let (_, g) = cost_and_gradient(&model, &[t], ShiftRule::default(), ShotBudget::Exact, &counter, &mut rng)
            .map_err(|e| e.to_string())?;
        worst_analytic = worst_analytic.max((g[0] + (2.0 * t).sin()).abs());
    }
    if worst_analytic >= 1e-9 {
        return Err(format!("cos²t derivative off by {worst_analytic:.3e}"));
    }
    Ok(format!("max rel err {worst:.2e} over 20 draws, cos²t err {worst_analytic:.2e}"))
}

fn accounting() -> Outcome {
    let mut checks = Vec::new();
    for (name, kind) in [("adam", "adam"), ("sgd", "sgd"), ("spsa", "spsa"), ("meta", "meta")] {
        let mut cfg = config("gaussian-adam.conf");
        cfg.set("optimizer.kind", kind).map_err(|e| e.to_string())?;
        cfg.run_id = format!("acc-{name}");
        let out = run_mem(&cfg);
        let n = out.summary.num_params as u64;
        let m = out.summary.num_points as u64;
        let expected = match kind {
            "meta" => m,
            "spsa" => 3 * m,
            _ => (2 * n + 1) * m,
        };
        let steps = per_step_evals(&out);
        if let Some((i, d)) = steps.iter().enumerate().find(|(_, &d)| d != expected) {
            return Err(format!("{name} step {i} logged {d} forwards, expected {expected}"));
        }
        checks.push(format!("{name} {expected}×{}", steps.len()));
    }
    Ok(format!("N=4, m=200: {}", checks.join(", ")))
}

fn gaussian_pair(seed: u64) -> (RunOutput, RunOutput, RunOutput) {
    let mut adam = config("gaussian-adam.conf");
    let mut meta = config("gaussian-meta.conf");
    let mut plain = config("gaussian-meta-noreplay.conf");
    for cfg in [&mut adam, &mut meta, &mut plain] {
        cfg.seed = seed;
    }
    let (a, (b, c)) = rayon::join(|| run_mem(&adam), || rayon::join(|| run_mem(&meta), || run_mem(&plain)));
    (a, b, c)
}

fn convergence(runs: &[(RunOutput, RunOutput, RunOutput)]) -> Outcome {
    let mut passed = 0;
    let mut detail = Vec::new();
    for (seed, (adam, meta, _)) in runs.iter().enumerate() {
        let cost_ok = meta.summary.final_cost <= adam.summary.final_cost + 0.05;
        let evals_ok = meta.summary.total_circuit_evals * 4 <= adam.summary.total_circuit_evals;
        if cost_ok && evals_ok {
            passed += 1;
        }
        detail.push(format!(
            "seed {seed}: meta {:.4} ({} evals) vs adam {:.4} ({} evals)",
            meta.summary.final_cost, meta.summary.total_circuit_evals, adam.summary.final_cost, adam.summary.total_circuit_evals
        ));
    }
    let msg = format!("{passed}/5 seeds; {}", detail.join("; "));
    if passed >= 4 { Ok(msg) } else { Err(msg) }
}

fn replay_stabilization(runs: &[(RunOutput, RunOutput, RunOutput)]) -> Outcome {
    let tail_var = |out: &RunOutput| {
        let costs: Vec<f64> = out.trace.iter().map(|r| r.cost).collect();
        common::sample_variance(&costs[costs.len().saturating_sub(10)..])
    };
    let mut passed = 0;
    let mut detail = Vec::new();
    for (seed, (_, with, without)) in runs.iter().enumerate() {
        let (a, b) = (tail_var(with), tail_var(without));
        if a <= b {
            passed += 1;
        }
        detail.push(format!("seed {seed}: {a:.3e} vs {b:.3e}"));
    }
    let msg = format!("{passed}/5 seeds with replay variance <= without; {}", detail.join("; "));
    if passed >= 4 { Ok(msg) } else { Err(msg) }
}

fn timing() -> Outcome {
    let mut base = config("gaussian-meta.conf");
    base.run_id = "timing".into();
    base.iterations = 3;
    base.meta.max_meta_iters = 1;
    let sizes = [100, 200, 400, 600, 800];
    let optimizers = [OptimizerChoice::Meta, OptimizerChoice::Gradient(qmeta::baseline::OptimizerKind::Adam)];
    let rows = harness::time_profile(&base, &sizes, &optimizers, 3).map_err(|e| e.to_string())?;
    let fit = |name: &str| {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.optimizer == name).map(|r| (r.size as f64, r.epoch_ms)).unzip();
        linear_fit(&xs, &ys)
    };
    let (meta_slope, _, meta_r2) = fit("meta").map_err(|e| e.to_string())?;
    let (adam_slope, _, adam_r2) = fit("adam").map_err(|e| e.to_string())?;
    let ratio = meta_slope / adam_slope;
    let msg = format!(
        "slopes meta {meta_slope:.3e} (r² {meta_r2:.3}), adam {adam_slope:.3e} (r² {adam_r2:.3}) ms/point, ratio {ratio:.3}"
    );
    if adam_slope > 0.0 && ratio <= 0.5 { Ok(msg) } else { Err(msg) }
}

fn shot_noise() -> Outcome {
    let mut state = Statevector::zero(1).map_err(|e| e.to_string())?;
    state
        .apply(&GateOp::Ry { target: 0, angle: std::f64::consts::FRAC_PI_2 })
        .map_err(|e| e.to_string())?;
    let exact = state.expectation_z(&[0]).map_err(|e| e.to_string())?;
    if exact.abs() > 1e-12 {
        return Err(format!("prepared state has <Z> = {exact}"));
    }
    let samples: Vec<f64> = (0..1000)
        .map(|seed| state.sample_expectation_z(&[0], 100, &mut seeded_rng(seed, 0)))
        .collect::<Result<_>>()
        .map_err(|e| e.to_string())?;
    let sd = common::sample_variance(&samples).sqrt();
    let msg = format!("empirical sd {sd:.4}");
    if (0.08..=0.12).contains(&sd) { Ok(msg) } else { Err(msg) }
}

fn check_bounded(opt: &mut MetaOptimizer, cfg_name: &str, seed: u64) -> std::result::Result<f64, String> {
    let cfg = config(cfg_name);
    let problem = harness::build_problem(&cfg).map_err(|e| e.to_string())?;
    let model = problem.model.as_ref();
    let theta0 = harness::initial_theta(&cfg, model.num_params()).map_err(|e| e.to_string())?;
    let counter = EvalCounter::new();
    let mut rng = seeded_rng(seed, 3);
    let mut prev: Option<(usize, Vec<f64>)> = None;
    let mut observed: f64 = 0.0;
    let outcome = opt
        .train(model, &theta0, ShotBudget::Exact, &counter, &mut rng, |s| {
            if let Some((k, theta)) = &prev {
                if *k == s.meta_iter {
                    let d = theta.iter().zip(&s.theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    observed = observed.max(d);
                }
            }
            prev = Some((s.meta_iter, s.theta.clone()));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(observed.max(outcome.max_update))
}

fn bounded_update() -> Outcome {
    let alpha = MetaConfig::default().alpha;
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        for name in ["gaussian-meta.conf", "gaussian-meta-noreplay.conf"] {
            let cfg = config(name);
            let mut opt = MetaOptimizer::new(cfg.meta.clone(), 4, &mut seeded_rng(seed, 2)).map_err(|e| e.to_string())?;
            worst = worst.max(check_bounded(&mut opt, name, seed)?);
        }
    }
    // weights large enough to saturate tanh on every component
    let cfg = config("gaussian-meta.conf");
    let mut big = LstmWeights::random(5, 20, 4, 50.0, &mut seeded_rng(9, 2)).map_err(|e| e.to_string())?;
    for v in big.as_mut_slice() {
        *v = v.signum() * 50.0;
    }
    let mut opt = MetaOptimizer::with_weights(cfg.meta.clone(), big).map_err(|e| e.to_string())?;
    let saturated = check_bounded(&mut opt, "gaussian-meta.conf", 0)?;
    worst = worst.max(saturated);
    let msg = format!("max |Δθ|∞ {worst:.17} (saturated weights {saturated:.17})");
    if worst <= alpha { Ok(msg) } else { Err(msg) }
}

struct ConstantCost {
    params: usize,
    points: usize,
}

impl CostModel for ConstantCost {
    fn num_params(&self) -> usize {
        self.params
    }

    fn num_points(&self) -> usize {
        self.points
    }

    fn outputs(&self, _: &[f64], _: ShotBudget, counter: &EvalCounter, _: &mut SimRng) -> Result<Vec<f64>> {
        counter.add(self.points as u64);
        Ok(vec![0.5; self.points])
    }

    fn loss(&self, _: &[f64]) -> f64 {
        0.75
    }

    fn loss_slope(&self, outputs: &[f64]) -> Vec<f64> {
        vec![0.0; outputs.len()]
    }
}

fn stopping_rule() -> Outcome {
    let model = ConstantCost { params: 3, points: 7 };
    let mut detail = Vec::new();
    for mode in [PhiTraining::Reinforce, PhiTraining::SpsaOnPhi, PhiTraining::Frozen] {
        let cfg = MetaConfig { eps_stop: 1e-4, phi_train: mode, ..MetaConfig::default() };
        let mut opt = MetaOptimizer::new(cfg, 3, &mut seeded_rng(0, 2)).map_err(|e| e.to_string())?;
        let out = opt
            .train(&model, &[0.1, 0.2, 0.3], ShotBudget::Exact, &EvalCounter::new(), &mut seeded_rng(0, 3), |_| Ok(()))
            .map_err(|e| e.to_string())?;
        if out.status != MetaStatus::Converged || out.meta_iterations != 2 {
            return Err(format!("{mode}: {} after {} meta-iterations", out.status.as_str(), out.meta_iterations));
        }
        detail.push(format!("{mode}: 2"));
    }
    Ok(format!("converged after exactly 2 meta-iterations ({})", detail.join(", ")))
}

fn cost_column(cfg: &ExperimentConfig) -> std::result::Result<String, String> {
    harness::run(cfg).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(harness::trace_path(cfg)).map_err(|e| e.to_string())?;
    Ok(text.lines().map(|l| l.split(',').nth(3).unwrap_or("")).collect::<Vec<_>>().join("\n"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rows = 0;
    for name in ["gaussian-meta.conf", "gaussian-adam.conf", "spsa-bench.conf"] {
        let mut first = config(name);
        first.out_dir = dir.path().join("a");
        let mut second = first.clone();
        second.out_dir = dir.path().join("b");
        let (a, b) = (cost_column(&first)?, cost_column(&second)?);
        if a != b {
            return Err(format!("{name}: cost columns differ"));
        }
        rows += a.lines().count() - 1;
    }
    Ok(format!("{rows} cost values byte-identical across repeat runs"))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Cell equations written out per unit, independently of the library's
/// vectorized layout helpers.
fn oracle_cell(w: &LstmWeights, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (d, hs, n) = (w.input_size(), w.hidden_size(), w.output_size());
    let wg = w.w_gates();
    let bg = w.b_gates();
    let gate = |g: usize, k: usize| {
        let row = g * hs + k;
        let mut z = bg[row];
        for j in 0..d {
            z += wg[row * (d + hs) + j] * x[j];
        }
        for j in 0..hs {
            z += wg[row * (d + hs) + d + j] * h[j];
        }
        z
    };
    let mut c_new = vec![0.0; hs];
    let mut h_new = vec![0.0; hs];
    for k in 0..hs {
        let i = sigmoid(gate(0, k));
        let f = sigmoid(gate(1, k));
        let g = gate(2, k).tanh();
        let o = sigmoid(gate(3, k));
        c_new[k] = f * c[k] + i * g;
        h_new[k] = o * c_new[k].tanh();
    }
    let omega = (0..n)
        .map(|r| w.b_out()[r] + (0..hs).map(|k| w.w_out()[r * hs + k] * h_new[k]).sum::<f64>())
        .collect();
    (omega, h_new, c_new)
}

fn lstm_cell() -> Outcome {
    let mut rng = seeded_rng(42, 0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..8usize);
        let hs = rng.random_range(1..10usize);
        let n = rng.random_range(1..6usize);
        let w = LstmWeights::random(d, hs, n, 0.5, &mut rng).map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        let state = LstmState {
            h: (0..hs).map(|_| normal.sample(&mut rng)).collect(),
            c: (0..hs).map(|_| normal.sample(&mut rng)).collect(),
        };
        let (omega, next) = w.forward(&x, &state).map_err(|e| e.to_string())?;
        let (o_ref, h_ref, c_ref) = oracle_cell(&w, &x, &state.h, &state.c);
        for (a, b) in omega.iter().chain(&next.h).chain(&next.c).zip(o_ref.iter().chain(&h_ref).chain(&c_ref)) {
            worst = worst.max((a - b).abs());
        }
    }
    if worst >= 1e-12 {
        return Err(format!("max deviation {worst:.3e}"));
    }
    let zero = LstmWeights::zeros(4, 6, 3);
    let (omega, next) = zero.forward(&[0.0; 4], &LstmState::zeros(6)).map_err(|e| e.to_string())?;
    if omega.iter().chain(&next.h).chain(&next.c).any(|&v| v != 0.0) {
        return Err("zero weights on a zero cell gave a nonzero output".into());
    }
    Ok(format!("max deviation {worst:.2e} over 100 draws; zero cell gives exact zeros"))
}

fn report(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(format!("panic: {msg}"))
    });
    let elapsed = fmt_duration(start.elapsed());
    match result {
        Ok(detail) => {
            println!("PASS criterion {id:>2} {name}: {detail} [{elapsed}]");
            true
        }
        Err(detail) => {
            println!("FAIL criterion {id:>2} {name}: {detail} [{elapsed}]");
            false
        }
    }
}

fn fmt_duration(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn main() -> ExitCode {
    // keep harness progress logs out of the report
    panic::set_hook(Box::new(|_| {}));
    let mut ok = true;
    ok &= report(1, "gradient oracle", gradient_oracle);
    ok &= report(2, "evaluation accounting", accounting);

    let start = Instant::now();
    let runs = panic::catch_unwind(|| (0..5).map(gaussian_pair).collect::<Vec<_>>());
    let shared = fmt_duration(start.elapsed());
    match &runs {
        Ok(runs) => {
            ok &= report(3, "convergence", || convergence(runs).map(|s| format!("{s} (runs {shared})")));
            ok &= report(4, "replay stabilization", || replay_stabilization(runs));
        }
        Err(_) => {
            ok &= report(3, "convergence", || Err("gaussian runs failed".into()));
            ok &= report(4, "replay stabilization", || Err("gaussian runs failed".into()));
        }
    }

    ok &= report(5, "timing scaling", timing);
    ok &= report(6, "shot noise", shot_noise);
    ok &= report(7, "bounded update", bounded_update);
    ok &= report(8, "stopping rule", stopping_rule);
    ok &= report(9, "determinism", determinism);
    ok &= report(10, "lstm cell", lstm_cell);
    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria failed");
        ExitCode::FAILURE
    }
}
