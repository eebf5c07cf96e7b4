#![allow(dead_code)]

use std::f64::consts::PI;

use qmeta::ansatz::{build_layered, build_strongly_entangling};
use qmeta::datasets::LabeledDataset;
use qmeta::estimators::{cost_and_gradient, ShiftRule};
use qmeta::qnn::{CostModel, EvalCounter, ObservableModel, QnnModel, ShotBudget};
use qmeta::{seeded_rng, Result, SimRng};
use rand::Rng;

/// Below this magnitude a gradient component counts as zero and is compared
/// absolutely (some final-layer rotations commute with the observable).
pub const ZERO_COMPONENT: f64 = 1e-7;

pub struct GradientCheck {
    pub description: String,
    pub max_rel_err: f64,
}

fn random_model(rng: &mut SimRng) -> (String, Box<dyn CostModel>) {
    let q = rng.random_range(1..=4usize);
    let layers = rng.random_range(1..=3usize);
    if q >= 2 && rng.random::<bool>() {
        let spec = build_strongly_entangling(q, layers).unwrap();
        (format!("strong q={q} L={layers}"), Box::new(ObservableModel::new(spec).unwrap()))
    } else {
        let m = 3;
        let points: Vec<Vec<f64>> = (0..m).map(|_| (0..q).map(|_| rng.random_range(-PI..PI)).collect()).collect();
        let labels = vec![1.0, -1.0, 1.0];
        let data = LabeledDataset::new("random", points, labels).unwrap();
        let spec = build_layered(q, layers).unwrap();
        (format!("layered q={q} L={layers}"), Box::new(QnnModel::new(spec, data).unwrap()))
    }
}

/// Parameter-shift against central differences on one random draw.
pub fn check_random_draw(seed: u64, h: f64) -> Result<GradientCheck> {
    let mut rng = seeded_rng(seed, 11);
    let (description, model) = random_model(&mut rng);
    let theta: Vec<f64> = (0..model.num_params()).map(|_| rng.random_range(-PI..PI)).collect();
    let counter = EvalCounter::new();
    let mut scratch = seeded_rng(0, 0);
    let (_, grad) = cost_and_gradient(model.as_ref(), &theta, ShiftRule::default(), ShotBudget::Exact, &counter, &mut scratch)?;
    let mut max_rel_err: f64 = 0.0;
    for (i, g) in grad.iter().enumerate() {
        let mut plus = theta.clone();
        plus[i] += h;
        let mut minus = theta.clone();
        minus[i] -= h;
        let fd = (model.cost(&plus, ShotBudget::Exact, &counter, &mut scratch)?
            - model.cost(&minus, ShotBudget::Exact, &counter, &mut scratch)?)
            / (2.0 * h);
        let scale = g.abs().max(fd.abs());
        let err = if scale < ZERO_COMPONENT {
            // both effectively zero
            if (g - fd).abs() < ZERO_COMPONENT { 0.0 } else { f64::INFINITY }
        } else {
            (g - fd).abs() / scale
        };
        max_rel_err = max_rel_err.max(err);
    }
    Ok(GradientCheck { description, max_rel_err })
}

/// `C(t) = cos²t`: one qubit, one point at x = 0 with label 0.
pub fn cos_squared_model() -> QnnModel {
    let data = LabeledDataset::from_raw("cos2", vec![vec![0.0]], vec![0.0]).unwrap();
    QnnModel::new(build_layered(1, 1).unwrap(), data).unwrap()
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}
