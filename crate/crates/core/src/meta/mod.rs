//! LSTM meta-optimizer.
//!
//! The optimizee only ever reports a scalar cost. Each step feeds
//! `exp([θ; ΔC]) / p` into an LSTM whose head output `Ω` moves the
//! parameters by `α·tanh(Ω)`, so one step costs exactly one cost evaluation.
//! Steps that lower the cost go into a replay buffer; when a meta-iteration
//! ends worse than the previous one, the next iteration restarts from a blend
//! of the current end point and the best recorded step.

mod lstm;
mod replay;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

pub use lstm::{Checkpoint, LstmState, LstmWeights, StepCache, Tensor, CHECKPOINT_FORMAT};
pub use replay::{ReplayBuffer, ReplayEntry};
pub use train::{Episode, MetaOptimizer, MetaStep, MetaStatus, TrainOutcome};

/// Exponent inputs are clamped to `[-EXP_CLAMP, EXP_CLAMP]`.
pub const EXP_CLAMP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenInit {
    Zero,
    Uniform01,
    Normal01,
}

impl FromStr for HiddenInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zero" | "zeros" => Ok(HiddenInit::Zero),
            "uniform" | "uniform01" => Ok(HiddenInit::Uniform01),
            "normal" | "normal01" => Ok(HiddenInit::Normal01),
            other => Err(Error::config(format!("unknown hidden init `{other}`"))),
        }
    }
}

impl fmt::Display for HiddenInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HiddenInit::Zero => "zero",
            HiddenInit::Uniform01 => "uniform01",
            HiddenInit::Normal01 => "normal01",
        })
    }
}

/// How Φ is updated after each meta-iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiTraining {
    /// Two extra unrolls with `Φ ± c·δ` and an Adam step on the SPSA estimate.
    SpsaOnPhi,
    /// Score-function gradient of the recorded episode, no extra evaluations.
    Reinforce,
    Frozen,
}

impl FromStr for PhiTraining {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spsa" | "spsa_on_phi" => Ok(PhiTraining::SpsaOnPhi),
            "reinforce" => Ok(PhiTraining::Reinforce),
            "frozen" | "none" => Ok(PhiTraining::Frozen),
            other => Err(Error::config(format!("unknown phi training mode `{other}`"))),
        }
    }
}

impl fmt::Display for PhiTraining {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhiTraining::SpsaOnPhi => "spsa",
            PhiTraining::Reinforce => "reinforce",
            PhiTraining::Frozen => "frozen",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    pub alpha: f64,
    pub p: f64,
    /// Unroll horizon `T`.
    pub unroll: usize,
    /// Meta-loss weights, one per unrolled step. Empty means all ones.
    pub weights: Vec<f64>,
    pub tau0: f64,
    pub zeta: f64,
    pub eps_stop: f64,
    pub max_meta_iters: usize,
    pub h0_init: HiddenInit,
    pub hidden_size: usize,
    pub phi_train: PhiTraining,
    pub replay: bool,
    pub replay_capacity: usize,
    pub phi_init_std: f64,
    pub phi_lr: f64,
    /// SPSA perturbation on Φ.
    pub phi_spsa_c: f64,
    /// Exploration std of the Reinforce policy.
    pub policy_std: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            p: 50.0,
            unroll: 10,
            weights: Vec::new(),
            tau0: 0.9,
            zeta: 0.99,
            eps_stop: 1e-4,
            max_meta_iters: 5,
            h0_init: HiddenInit::Normal01,
            hidden_size: 20,
            phi_train: PhiTraining::Reinforce,
            replay: true,
            replay_capacity: 16,
            phi_init_std: 0.1,
            phi_lr: 1e-3,
            phi_spsa_c: 0.01,
            policy_std: 0.01,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("meta.{name} must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("p", self.p)?;
        positive("phi_lr", self.phi_lr)?;
        positive("phi_spsa_c", self.phi_spsa_c)?;
        positive("policy_std", self.policy_std)?;
        if !(self.tau0 > 0.0 && self.tau0 <= 1.0) {
            return Err(Error::config(format!("meta.tau0 must lie in (0, 1], got {}", self.tau0)));
        }
        if !(self.zeta >= 0.0 && self.zeta.is_finite()) {
            return Err(Error::config(format!("meta.zeta must be non-negative, got {}", self.zeta)));
        }
        if !(self.eps_stop >= 0.0) {
            return Err(Error::config("meta.eps_stop must be non-negative"));
        }
        if !(self.phi_init_std >= 0.0 && self.phi_init_std.is_finite()) {
            return Err(Error::config("meta.phi_init_std must be non-negative"));
        }
        if self.unroll == 0 || self.max_meta_iters == 0 || self.hidden_size == 0 {
            return Err(Error::config("meta.unroll, meta.iterations and meta.hidden_size must be at least 1"));
        }
        if self.replay_capacity == 0 {
            return Err(Error::config("meta.replay_capacity must be at least 1"));
        }
        if !self.weights.is_empty() && self.weights.len() != self.unroll {
            return Err(Error::config(format!(
                "meta.weights has {} entries but the unroll horizon is {}",
                self.weights.len(),
                self.unroll
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("meta.weights must be finite"));
        }
        Ok(())
    }

    /// `w_1..w_T` with the uniform default filled in.
    pub fn loss_weights(&self) -> Vec<f64> {
        if self.weights.is_empty() {
            vec![1.0; self.unroll]
        } else {
            self.weights.clone()
        }
    }
}

/// `exp([θ; ΔC]) / p`, exponents clamped to `[-20, 20]`.
pub fn preprocess_input(theta: &[f64], delta_cost: f64, p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::config(format!("normalization strength must be positive, got {p}")));
    }
    let mut out = Vec::with_capacity(theta.len() + 1);
    for &x in theta.iter().chain(std::iter::once(&delta_cost)) {
        if !x.is_finite() {
            return Err(Error::numeric(format!("non-finite meta-optimizer input {x}")));
        }
        let clamped = x.clamp(-EXP_CLAMP, EXP_CLAMP);
        if clamped != x {
            log::warn!("meta input {x} clamped to {clamped} before exponentiation");
        }
        let v = clamped.exp() / p;
        if !v.is_finite() {
            return Err(Error::numeric(format!("preprocessed input overflowed: exp({clamped})/{p}")));
        }
        out.push(v);
    }
    Ok(out)
}

/// `θ + α·tanh(Ω)`.
pub fn apply_update(theta: &[f64], omega: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if theta.len() != omega.len() {
        return Err(Error::config(format!(
            "update has {} components for {} parameters",
            omega.len(),
            theta.len()
        )));
    }
    Ok(theta.iter().zip(omega).map(|(t, o)| bounded_step(*t, alpha * o.tanh(), alpha)).collect())
}

/// `theta + delta` for `|delta| ≤ alpha`, nudged by an ulp where rounding
/// would otherwise make the realized step exceed `alpha`.
pub(crate) fn bounded_step(theta: f64, delta: f64, alpha: f64) -> f64 {
    let mut next = theta + delta;
    while (next - theta).abs() > alpha {
        next = if next > theta { next.next_down() } else { next.next_up() };
    }
    next
}

/// `τ·θ_end + (1−τ)·θ_s`, with the hidden state taken from the sampled entry.
pub fn seed_parameters(theta_end: &[f64], sampled: &ReplayEntry, tau: f64) -> Result<(Vec<f64>, LstmState)> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config(format!("blend coefficient must lie in [0, 1], got {tau}")));
    }
    if theta_end.len() != sampled.theta.len() {
        return Err(Error::config("replay entry has a different parameter count"));
    }
    let theta = if tau == 1.0 {
        theta_end.to_vec()
    } else if tau == 0.0 {
        sampled.theta.clone()
    } else {
        theta_end
            .iter()
            .zip(&sampled.theta)
            .map(|(e, s)| tau * e + (1.0 - tau) * s)
            .collect()
    };
    Ok((theta, sampled.hidden.clone()))
}

/// `τ / (1 + ζ·t)`.
pub fn decay_tau(tau: f64, zeta: f64, step: u64) -> f64 {
    tau / (1.0 + zeta * step as f64)
}

/// `Σ w_t C_t`.
pub fn meta_loss(costs: &[f64], weights: &[f64]) -> Result<f64> {
    if costs.len() != weights.len() {
        return Err(Error::config(format!(
            "{} costs but {} meta-loss weights",
            costs.len(),
            weights.len()
        )));
    }
    Ok(costs.iter().zip(weights).map(|(c, w)| c * w).sum())
}

pub fn init_hidden<R: Rng + ?Sized>(kind: HiddenInit, hidden_size: usize, rng: &mut R) -> LstmState {
    let mut draw = |n: usize| -> Vec<f64> {
        match kind {
            HiddenInit::Zero => vec![0.0; n],
            HiddenInit::Uniform01 => (0..n).map(|_| rng.random::<f64>()).collect(),
            HiddenInit::Normal01 => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        }
    };
    let h = draw(hidden_size);
    let c = draw(hidden_size);
    LstmState { h, c }
}
