//! Seeded synthetic datasets and the binary Iris loader.
//!
//! Labels are always `+1` / `−1`. Generators emit the positive class first,
//! then the negative class, `n_per_class` points each.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    points: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl LabeledDataset {
    /// Validated constructor: labels in {−1, +1}, both classes present,
    /// finite features of one common dimension.
    pub fn new(name: impl Into<String>, points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        let data = Self::from_raw(name, points, labels)?;
        if let Some(bad) = data.labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::input(format!("label {bad} is not ±1")));
        }
        let positives = data.labels.iter().filter(|&&y| y == 1.0).count();
        if data.len() < 2 || positives == 0 || positives == data.len() {
            return Err(Error::input("dataset needs at least one point of each class"));
        }
        Ok(data)
    }

    /// Shape and finiteness checks only; label values are not restricted.
    /// Useful for analytic fixtures such as a single point with `y = 0`.
    pub fn from_raw(name: impl Into<String>, points: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::input("dataset is empty"));
        }
        if points.len() != labels.len() {
            return Err(Error::input(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let dim = points[0].len();
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::input(format!("point {i} has dimension {}, expected {dim}", p.len())));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("point {i} has a non-finite feature")));
            }
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::input("non-finite label"));
        }
        Ok(Self {
            name: name.into(),
            points,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Writes `x0,…,x{d-1},label` with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        out.write_record(&header).map_err(csv_io)?;
        for (p, y) in self.points.iter().zip(&self.labels) {
            let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            row.push(y.to_string());
            out.write_record(&row).map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Two bivariate Gaussian classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mu1: [f64; 2],
    pub sigma1: [[f64; 2]; 2],
    pub mu2: [f64; 2],
    pub sigma2: [[f64; 2]; 2],
    pub n_per_class: usize,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            mu1: [2.0, 3.0],
            sigma1: [[10.0, 1.0], [1.0, 4.0]],
            mu2: [2.0, 3.0],
            sigma2: [[5.0, 2.0], [2.0, 5.0]],
            n_per_class: 100,
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite 2×2 matrix.
pub fn cholesky2(sigma: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let [[a, b], [b2, d]] = *sigma;
    if (b - b2).abs() > 1e-12 {
        return Err(Error::config("covariance matrix is not symmetric"));
    }
    if !(a > 0.0) {
        return Err(Error::config("covariance matrix is not positive definite"));
    }
    let l00 = a.sqrt();
    let l10 = b / l00;
    let rest = d - l10 * l10;
    if !(rest > 0.0) {
        return Err(Error::config("covariance matrix is not positive definite"));
    }
    Ok([[l00, 0.0], [l10, rest.sqrt()]])
}

pub fn gen_gaussian(spec: &GaussianSpec, seed: u64) -> Result<LabeledDataset> {
    if spec.n_per_class == 0 {
        return Err(Error::config("n_per_class must be at least 1"));
    }
    let l1 = cholesky2(&spec.sigma1)?;
    let l2 = cholesky2(&spec.sigma2)?;
    let mut rng = seeded_rng(seed, 0);
    let mut points = Vec::with_capacity(2 * spec.n_per_class);
    let mut labels = Vec::with_capacity(2 * spec.n_per_class);
    for (mu, l, label) in [(spec.mu1, l1, 1.0), (spec.mu2, l2, -1.0)] {
        for _ in 0..spec.n_per_class {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            points.push(vec![
                mu[0] + l[0][0] * z0,
                mu[1] + l[1][0] * z0 + l[1][1] * z1,
            ]);
            labels.push(label);
        }
    }
    LabeledDataset::new("gaussian", points, labels)
}

/// Two interleaved spirals with angle `t ~ U(0, 3π)` and radius `t / 3π`.
/// The counter-clockwise spiral is labelled `+1`, its mirror image `−1`.
pub fn gen_spirals(n_per_class: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::config("n_per_class must be at least 1"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::config("noise_std must be finite and non-negative"));
    }
    let scale = 3.0 * PI;
    let noise = Normal::new(0.0, noise_std).expect("validated std");
    let mut rng = seeded_rng(seed, 0);
    let mut points = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (direction, label) in [(1.0, 1.0), (-1.0, -1.0)] {
        for _ in 0..n_per_class {
            let t: f64 = rng.random_range(0.0..scale);
            let angle = direction * t;
            points.push(vec![
                t * angle.cos() / scale + noise.sample(&mut rng),
                t * angle.sin() / scale + noise.sample(&mut rng),
            ]);
            labels.push(label);
        }
    }
    LabeledDataset::new("spirals", points, labels)
}

/// Points uniform on two concentric spheres; the inner sphere is `+1`.
pub fn gen_spheres(n_per_class: usize, r_inner: f64, r_outer: f64, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::config("n_per_class must be at least 1"));
    }
    if !(r_inner > 0.0 && r_inner < r_outer && r_outer.is_finite()) {
        return Err(Error::config(format!(
            "sphere radii must satisfy 0 < r_inner < r_outer, got {r_inner} and {r_outer}"
        )));
    }
    let mut rng = seeded_rng(seed, 0);
    let mut points = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (radius, label) in [(r_inner, 1.0), (r_outer, -1.0)] {
        let mut produced = 0;
        while produced < n_per_class {
            let v: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            points.push(v.iter().map(|c| radius * c / norm).collect());
            labels.push(label);
            produced += 1;
        }
    }
    LabeledDataset::new("spheres", points, labels)
}

/// The Iris species kept by [`load_iris_binary`]; the first maps to `+1`.
pub const DEFAULT_IRIS_PAIR: (&str, &str) = ("setosa", "versicolor");

#[derive(Debug, Deserialize)]
struct IrisRow {
    sepal_length: f64,
    sepal_width: f64,
    petal_length: f64,
    petal_width: f64,
    species: String,
}

/// Loads `sepal_length,sepal_width,petal_length,petal_width,species` and keeps
/// two species.
pub fn load_iris_binary(path: impl AsRef<Path>, pair: (&str, &str)) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    read_iris_binary(file, pair)
}

pub fn read_iris_binary<R: Read>(reader: R, pair: (&str, &str)) -> Result<LabeledDataset> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, row) in csv.deserialize::<IrisRow>().enumerate() {
        // Row 1 is the header.
        let row = row.map_err(|e| Error::input(format!("iris row {}: {e}", i + 2)))?;
        let label = if row.species == pair.0 {
            1.0
        } else if row.species == pair.1 {
            -1.0
        } else {
            continue;
        };
        let features = vec![row.sepal_length, row.sepal_width, row.petal_length, row.petal_width];
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("iris row {}: non-finite feature", i + 2)));
        }
        points.push(features);
        labels.push(label);
    }
    if points.is_empty() {
        return Err(Error::input("iris file contains no rows of the selected species"));
    }
    LabeledDataset::new("iris", points, labels)
}
