//! The optimizee: dataset-level cost, pseudo-gradient and evaluation accounting.
//!
//! One *circuit evaluation* is one forward execution of the circuit on one data
//! point. Every cost evaluation over `m` points therefore adds `m` to the
//! [`EvalCounter`].

use std::fmt;
use std::num::NonZeroU64;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::ansatz::AnsatzSpec;
use crate::datasets::LabeledDataset;
use crate::{Error, Result, SimRng};

/// Measurement budget per circuit execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShotBudget {
    /// Infinite shots: exact expectations.
    #[default]
    Exact,
    Finite(NonZeroU64),
}

impl ShotBudget {
    pub fn finite(shots: u64) -> Result<Self> {
        NonZeroU64::new(shots)
            .map(ShotBudget::Finite)
            .ok_or_else(|| Error::config("shot count must be at least 1"))
    }
}

impl FromStr for ShotBudget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("exact") {
            return Ok(ShotBudget::Exact);
        }
        let shots: u64 = s
            .parse()
            .map_err(|_| Error::config(format!("shots must be `exact` or a positive integer, got `{s}`")))?;
        ShotBudget::finite(shots)
    }
}

impl fmt::Display for ShotBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShotBudget::Exact => f.write_str("exact"),
            ShotBudget::Finite(n) => write!(f, "{n}"),
        }
    }
}

/// Running total of circuit executions. Safe to share between threads.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, forwards: u64) {
        self.0.fetch_add(forwards, Ordering::SeqCst);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// One evaluated point of an optimization trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CostPoint {
    pub theta: Vec<f64>,
    pub cost: f64,
    /// Previous cost minus this cost; `1.0` when there is no predecessor.
    pub delta_cost: f64,
}

/// `ΔC = C(θ^{t-1}) − C(θ^t)`; positive iff the cost decreased.
pub fn pseudo_gradient(prev_cost: f64, curr_cost: f64) -> f64 {
    prev_cost - curr_cost
}

/// A black-box objective as seen by every optimizer.
///
/// `outputs` returns the per-point circuit outputs (and charges
/// `num_points()` evaluations); `loss` reduces them to the scalar cost.
/// `loss_slope` is `∂loss/∂output_j`, which lets gradient estimators chain
/// per-output parameter-shift derivatives into the cost gradient.
pub trait CostModel: Sync {
    fn num_params(&self) -> usize;

    /// Circuit executions charged per cost evaluation.
    fn num_points(&self) -> usize;

    fn outputs(
        &self,
        theta: &[f64],
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
    ) -> Result<Vec<f64>>;

    fn loss(&self, outputs: &[f64]) -> f64;

    fn loss_slope(&self, outputs: &[f64]) -> Vec<f64>;

    fn cost(
        &self,
        theta: &[f64],
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let outputs = self.outputs(theta, shots, counter, rng)?;
        let cost = self.loss(&outputs);
        if !cost.is_finite() {
            return Err(Error::numeric(format!("cost evaluated to {cost}")));
        }
        Ok(cost)
    }
}

/// Rejects parameter vectors of the wrong length or with non-finite entries.
pub(crate) fn check_theta(theta: &[f64], expected: usize) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::config(format!(
            "parameter vector has length {}, expected {expected}",
            theta.len()
        )));
    }
    if let Some(bad) = theta.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite parameter {bad}")));
    }
    Ok(())
}

/// Per-point random streams for one batch of shot-sampled forwards.
///
/// A single draw from the caller's generator fixes the whole batch, so results
/// do not depend on how points are scheduled across threads.
fn batch_streams(shots: ShotBudget, rng: &mut SimRng) -> Option<u64> {
    match shots {
        ShotBudget::Exact => None,
        ShotBudget::Finite(_) => Some(rng.next_u64()),
    }
}

fn point_rng(base: u64, index: usize) -> SimRng {
    let mut rng = SimRng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng
}

/// Mean squared error of an ansatz over a labelled dataset.
#[derive(Debug, Clone)]
pub struct QnnModel {
    spec: AnsatzSpec,
    data: LabeledDataset,
}

impl QnnModel {
    pub fn new(spec: AnsatzSpec, data: LabeledDataset) -> Result<Self> {
        if !spec.embeds_data() {
            return Err(Error::config(format!(
                "ansatz {:?} has no data embedding",
                spec.family()
            )));
        }
        if data.dim() != spec.num_qubits() {
            return Err(Error::config(format!(
                "dataset dimension {} does not match {} qubits",
                data.dim(),
                spec.num_qubits()
            )));
        }
        Ok(Self { spec, data })
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }
}

impl CostModel for QnnModel {
    fn num_params(&self) -> usize {
        self.spec.num_params()
    }

    fn num_points(&self) -> usize {
        self.data.len()
    }

    fn outputs(
        &self,
        theta: &[f64],
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        check_theta(theta, self.spec.num_params())?;
        let base = batch_streams(shots, rng);
        let outputs = self
            .data
            .points()
            .par_iter()
            .with_min_len(32)
            .enumerate()
            .map(|(j, x)| {
                let mut local = base.map(|b| point_rng(b, j));
                self.spec.evaluate(x, theta, shots, local.as_mut())
            })
            .collect::<Result<Vec<f64>>>()?;
        counter.add(outputs.len() as u64);
        Ok(outputs)
    }

    fn loss(&self, outputs: &[f64]) -> f64 {
        let m = outputs.len() as f64;
        outputs
            .iter()
            .zip(self.data.labels())
            .map(|(f, y)| (y - f).powi(2))
            .sum::<f64>()
            / m
    }

    fn loss_slope(&self, outputs: &[f64]) -> Vec<f64> {
        let m = outputs.len() as f64;
        outputs
            .iter()
            .zip(self.data.labels())
            .map(|(f, y)| -2.0 * (y - f) / m)
            .collect()
    }
}

/// The observable itself as the cost, with no dataset (`m = 1`).
#[derive(Debug, Clone)]
pub struct ObservableModel {
    spec: AnsatzSpec,
}

impl ObservableModel {
    pub fn new(spec: AnsatzSpec) -> Result<Self> {
        if spec.embeds_data() {
            return Err(Error::config(
                "observable cost needs an ansatz without data embedding",
            ));
        }
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }
}

impl CostModel for ObservableModel {
    fn num_params(&self) -> usize {
        self.spec.num_params()
    }

    fn num_points(&self) -> usize {
        1
    }

    fn outputs(
        &self,
        theta: &[f64],
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        check_theta(theta, self.spec.num_params())?;
        let mut local = batch_streams(shots, rng).map(|b| point_rng(b, 0));
        let out = self.spec.evaluate(&[], theta, shots, local.as_mut())?;
        counter.add(1);
        Ok(vec![out])
    }

    fn loss(&self, outputs: &[f64]) -> f64 {
        outputs[0]
    }

    fn loss_slope(&self, _outputs: &[f64]) -> Vec<f64> {
        vec![1.0]
    }
}

/// Dataset-level cost of `model` at `theta`; adds `m` forwards to `counter`.
pub fn cost(
    model: &dyn CostModel,
    theta: &[f64],
    shots: ShotBudget,
    counter: &EvalCounter,
    rng: &mut SimRng,
) -> Result<f64> {
    model.cost(theta, shots, counter, rng)
}
