//! Gradient estimators that only use circuit executions.
//!
//! The parameter-shift rule differentiates each circuit output exactly,
//! `∂f/∂θ_i = c·[f(θ + s·e_i) − f(θ − s·e_i)]`, and the cost gradient follows
//! from the chain rule through [`CostModel::loss_slope`]. One gradient costs
//! `2·N·m` circuit evaluations; an optimizer step that also logs the cost costs
//! `(2N + 1)·m`. A gradient-free step costs only the `m` of the cost itself,
//! which is the linear-versus-quadratic gap in per-pass run time.

use rand::Rng;

use crate::qnn::{check_theta, CostModel, EvalCounter, ShotBudget};
use crate::{Error, Result, SimRng};

/// Shift-rule constants. `c = 0.5`, `s = π/2` is exact for `exp(−iφP/2)` gates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftRule {
    pub c: f64,
    pub s: f64,
}

impl Default for ShiftRule {
    fn default() -> Self {
        Self {
            c: 0.5,
            s: std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Parameter-shift gradient given the outputs already measured at `theta`.
///
/// Charges `2·N·m` evaluations; the outputs at `theta` are supplied by the
/// caller (typically from the cost evaluation it logs anyway).
pub fn parameter_shift_gradient(
    model: &dyn CostModel,
    theta: &[f64],
    outputs_at_theta: &[f64],
    rule: ShiftRule,
    shots: ShotBudget,
    counter: &EvalCounter,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    if rule.s == 0.0 || !rule.s.is_finite() || !rule.c.is_finite() {
        return Err(Error::config("shift angle must be finite and non-zero"));
    }
    check_theta(theta, model.num_params())?;
    if outputs_at_theta.len() != model.num_points() {
        return Err(Error::config("outputs_at_theta length must equal the number of points"));
    }
    let slope = model.loss_slope(outputs_at_theta);
    let mut shifted = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        shifted[i] = theta[i] + rule.s;
        let plus = model.outputs(&shifted, shots, counter, rng)?;
        shifted[i] = theta[i] - rule.s;
        let minus = model.outputs(&shifted, shots, counter, rng)?;
        shifted[i] = theta[i];
        let g: f64 = slope
            .iter()
            .zip(plus.iter().zip(&minus))
            .map(|(w, (p, m))| w * rule.c * (p - m))
            .sum();
        if !g.is_finite() {
            return Err(Error::numeric(format!("gradient component {i} is {g}")));
        }
        grad.push(g);
    }
    Ok(grad)
}

/// Cost and parameter-shift gradient together: `(2N + 1)·m` evaluations.
pub fn cost_and_gradient(
    model: &dyn CostModel,
    theta: &[f64],
    rule: ShiftRule,
    shots: ShotBudget,
    counter: &EvalCounter,
    rng: &mut SimRng,
) -> Result<(f64, Vec<f64>)> {
    let outputs = model.outputs(theta, shots, counter, rng)?;
    let cost = model.loss(&outputs);
    if !cost.is_finite() {
        return Err(Error::numeric(format!("cost evaluated to {cost}")));
    }
    let grad = parameter_shift_gradient(model, theta, &outputs, rule, shots, counter, rng)?;
    Ok((cost, grad))
}

/// SPSA perturbation schedule `c_k = a / (k + 1)^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsaConfig {
    pub a: f64,
    pub gamma: f64,
}

impl Default for SpsaConfig {
    fn default() -> Self {
        Self { a: 0.1, gamma: 0.101 }
    }
}

impl SpsaConfig {
    pub fn perturbation(&self, k: usize) -> f64 {
        self.a / ((k + 1) as f64).powf(self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) || !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("SPSA needs a > 0 and γ ≥ 0"));
        }
        Ok(())
    }
}

/// Rademacher vector of ±1 entries.
pub fn rademacher<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// SPSA estimate for a given perturbation direction `delta`; charges `2·m`.
pub fn spsa_estimate_along(
    model: &dyn CostModel,
    theta: &[f64],
    delta: &[f64],
    ck: f64,
    shots: ShotBudget,
    counter: &EvalCounter,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let plus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t + ck * d).collect();
    let minus: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t - ck * d).collect();
    let c_plus = model.cost(&plus, shots, counter, rng)?;
    let c_minus = model.cost(&minus, shots, counter, rng)?;
    let diff = c_plus - c_minus;
    Ok(delta.iter().map(|d| diff / (2.0 * ck * d)).collect())
}

/// One SPSA gradient estimate at step `k` plus the cost at `theta`
/// (the extra nominal call); charges `3·m`.
pub fn spsa_gradient(
    model: &dyn CostModel,
    theta: &[f64],
    cfg: SpsaConfig,
    k: usize,
    shots: ShotBudget,
    counter: &EvalCounter,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, f64)> {
    cfg.validate()?;
    check_theta(theta, model.num_params())?;
    let delta = rademacher(theta.len(), rng);
    let estimate = spsa_estimate_along(model, theta, &delta, cfg.perturbation(k), shots, counter, rng)?;
    let cost = model.cost(theta, shots, counter, rng)?;
    Ok((estimate, cost))
}
