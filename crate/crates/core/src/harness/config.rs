//! Experiment configuration.
//!
//! A config file is a list of `section.key = value` lines. Blank lines and
//! lines starting with `#` are ignored, as is anything after a ` #`. Lists are
//! comma separated. Unknown keys are rejected so typos never pass silently.
//!
//! ```text
//! run.id = gauss-meta
//! run.seed = 0
//! optimizer.kind = meta
//! dataset.kind = gaussian
//! ansatz.layers = 2
//! meta.replay = true
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::ansatz::{Family, Reduction};
use crate::baseline::OptimizerKind;
use crate::datasets::GaussianSpec;
use crate::estimators::SpsaConfig;
use crate::meta::MetaConfig;
use crate::qnn::ShotBudget;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerChoice {
    Meta,
    Gradient(OptimizerKind),
    Spsa,
}

impl FromStr for OptimizerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "meta" | "lstm" => Ok(OptimizerChoice::Meta),
            "spsa" => Ok(OptimizerChoice::Spsa),
            other => other.parse().map(OptimizerChoice::Gradient),
        }
    }
}

impl fmt::Display for OptimizerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerChoice::Meta => f.write_str("meta"),
            OptimizerChoice::Spsa => f.write_str("spsa"),
            OptimizerChoice::Gradient(kind) => kind.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Gaussian,
    Spirals,
    Spheres,
    Iris,
    /// No data: the cost is the observable itself.
    None,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(DatasetKind::Gaussian),
            "spirals" => Ok(DatasetKind::Spirals),
            "spheres" => Ok(DatasetKind::Spheres),
            "iris" => Ok(DatasetKind::Iris),
            "none" => Ok(DatasetKind::None),
            other => Err(Error::config(format!("unknown dataset kind `{other}`"))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Gaussian => "gaussian",
            DatasetKind::Spirals => "spirals",
            DatasetKind::Spheres => "spheres",
            DatasetKind::Iris => "iris",
            DatasetKind::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Defaults to the run seed.
    pub seed: Option<u64>,
    pub gaussian: GaussianSpec,
    /// Points per class for spirals and spheres.
    pub n_per_class: usize,
    pub noise: f64,
    pub r_inner: f64,
    pub r_outer: f64,
    /// Iris CSV; the bundled copy when unset.
    pub path: Option<PathBuf>,
    pub classes: (String, String),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Gaussian,
            seed: None,
            gaussian: GaussianSpec::default(),
            n_per_class: 100,
            noise: 0.0,
            r_inner: 0.3,
            r_outer: 1.0,
            path: None,
            classes: ("setosa".into(), "versicolor".into()),
        }
    }
}

impl DatasetConfig {
    /// Sets the total point count for the generated kinds.
    pub fn set_total_points(&mut self, m: usize) -> Result<()> {
        if m < 2 || m % 2 != 0 {
            return Err(Error::config(format!("dataset size must be even and at least 2, got {m}")));
        }
        match self.kind {
            DatasetKind::Gaussian => self.gaussian.n_per_class = m / 2,
            DatasetKind::Spirals | DatasetKind::Spheres => self.n_per_class = m / 2,
            DatasetKind::Iris | DatasetKind::None => {
                return Err(Error::config(format!("the size of the {} dataset is fixed", self.kind)))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzConfig {
    pub family: Family,
    /// Defaults to the data dimension, or 2 without data.
    pub qubits: Option<usize>,
    pub layers: usize,
    pub observable: Option<Vec<usize>>,
    pub reduction: Option<Reduction>,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        Self {
            family: Family::LayeredRxRy,
            qubits: None,
            layers: 2,
            observable: None,
            reduction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub shots: ShotBudget,
    pub optimizer: OptimizerChoice,
    /// Steps for gradient and SPSA runs.
    pub iterations: usize,
    pub lr: f64,
    /// Standard deviation of the normal initial parameters.
    pub init_std: f64,
    pub spsa: SpsaConfig,
    pub meta: MetaConfig,
    /// Φ checkpoint to start from instead of a fresh initialization.
    pub meta_checkpoint: Option<PathBuf>,
    /// Write the trained Φ next to the trace.
    pub save_checkpoint: bool,
    pub dataset: DatasetConfig,
    pub ansatz: AnsatzConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            out_dir: PathBuf::from("out"),
            shots: ShotBudget::Exact,
            optimizer: OptimizerChoice::Meta,
            iterations: 25,
            lr: 1e-2,
            init_std: 1.0,
            spsa: SpsaConfig::default(),
            meta: MetaConfig::default(),
            meta_checkpoint: None,
            save_checkpoint: false,
            dataset: DatasetConfig::default(),
            ansatz: AnsatzConfig::default(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(Error::config(format!("{key}: expected a boolean, got `{other}`"))),
    }
}

fn parse_pair<const N: usize>(key: &str, value: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = parse_list(key, value)?;
    v.try_into()
        .map_err(|v: Vec<f64>| Error::config(format!("{key}: expected {N} numbers, got {}", v.len())))
}

fn parse_matrix(key: &str, value: &str) -> Result<[[f64; 2]; 2]> {
    let [a, b, c, d] = parse_pair::<4>(key, value)?;
    Ok([[a, b], [c, d]])
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // Relative data paths resolve against the config file.
        if let (Some(p), Some(dir)) = (&cfg.dataset.path, path.parent()) {
            if p.is_relative() {
                cfg.dataset.path = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find(" #") {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let mut cfg = Self::default();
        for (key, value) in &entries {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key;
        let v = value;
        match key {
            "run.id" => self.run_id = v.trim().to_string(),
            "run.seed" => self.seed = parse_value(k, v)?,
            "run.out_dir" => self.out_dir = PathBuf::from(v.trim()),
            "run.shots" => self.shots = parse_value(k, v)?,
            "optimizer.kind" => self.optimizer = parse_value(k, v)?,
            "optimizer.iterations" => self.iterations = parse_value(k, v)?,
            "optimizer.lr" => self.lr = parse_value(k, v)?,
            "optimizer.init_std" => self.init_std = parse_value(k, v)?,
            "spsa.a" => self.spsa.a = parse_value(k, v)?,
            "spsa.gamma" => self.spsa.gamma = parse_value(k, v)?,
            "meta.alpha" => self.meta.alpha = parse_value(k, v)?,
            "meta.p" => self.meta.p = parse_value(k, v)?,
            "meta.unroll" => self.meta.unroll = parse_value(k, v)?,
            "meta.iterations" => self.meta.max_meta_iters = parse_value(k, v)?,
            "meta.weights" => self.meta.weights = parse_list(k, v)?,
            "meta.tau0" => self.meta.tau0 = parse_value(k, v)?,
            "meta.zeta" => self.meta.zeta = parse_value(k, v)?,
            "meta.eps_stop" => self.meta.eps_stop = parse_value(k, v)?,
            "meta.h0_init" => self.meta.h0_init = parse_value(k, v)?,
            "meta.hidden_size" => self.meta.hidden_size = parse_value(k, v)?,
            "meta.phi_train" => self.meta.phi_train = parse_value(k, v)?,
            "meta.replay" => self.meta.replay = parse_bool(k, v)?,
            "meta.replay_capacity" => self.meta.replay_capacity = parse_value(k, v)?,
            "meta.phi_init_std" => self.meta.phi_init_std = parse_value(k, v)?,
            "meta.phi_lr" => self.meta.phi_lr = parse_value(k, v)?,
            "meta.phi_spsa_c" => self.meta.phi_spsa_c = parse_value(k, v)?,
            "meta.policy_std" => self.meta.policy_std = parse_value(k, v)?,
            "meta.checkpoint" => self.meta_checkpoint = Some(PathBuf::from(v.trim())),
            "meta.save_checkpoint" => self.save_checkpoint = parse_bool(k, v)?,
            "dataset.kind" => self.dataset.kind = parse_value(k, v)?,
            "dataset.seed" => self.dataset.seed = Some(parse_value(k, v)?),
            "dataset.n_per_class" => {
                let n: usize = parse_value(k, v)?;
                self.dataset.n_per_class = n;
                self.dataset.gaussian.n_per_class = n;
            }
            "dataset.mu1" => self.dataset.gaussian.mu1 = parse_pair(k, v)?,
            "dataset.mu2" => self.dataset.gaussian.mu2 = parse_pair(k, v)?,
            "dataset.sigma1" => self.dataset.gaussian.sigma1 = parse_matrix(k, v)?,
            "dataset.sigma2" => self.dataset.gaussian.sigma2 = parse_matrix(k, v)?,
            "dataset.noise" => self.dataset.noise = parse_value(k, v)?,
            "dataset.r_inner" => self.dataset.r_inner = parse_value(k, v)?,
            "dataset.r_outer" => self.dataset.r_outer = parse_value(k, v)?,
            "dataset.path" => self.dataset.path = Some(PathBuf::from(v.trim())),
            "dataset.classes" => {
                let names: Vec<String> = parse_list(k, v)?;
                match names.as_slice() {
                    [a, b] => self.dataset.classes = (a.clone(), b.clone()),
                    _ => return Err(Error::config(format!("{k}: expected two class names"))),
                }
            }
            "ansatz.family" => self.ansatz.family = parse_value(k, v)?,
            "ansatz.qubits" => self.ansatz.qubits = Some(parse_value(k, v)?),
            "ansatz.layers" => self.ansatz.layers = parse_value(k, v)?,
            "ansatz.observable" => self.ansatz.observable = Some(parse_list(k, v)?),
            "ansatz.reduction" => self.ansatz.reduction = Some(parse_value(k, v)?),
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\', ',']) {
            return Err(Error::config(format!("run.id `{}` is not a valid file stem", self.run_id)));
        }
        if self.iterations == 0 {
            return Err(Error::config("optimizer.iterations must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("optimizer.lr must be positive"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::config("optimizer.init_std must be non-negative"));
        }
        if self.ansatz.layers == 0 {
            return Err(Error::config("ansatz.layers must be at least 1"));
        }
        self.spsa.validate()?;
        self.meta.validate()
    }

    pub fn dataset_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.seed)
    }

    /// Everything that determines the model, for comparing runs.
    pub(crate) fn problem_key(&self) -> String {
        format!(
            "{:?}|{}|{:?}|{:?}",
            self.dataset,
            self.dataset_seed(),
            self.ansatz,
            self.shots
        )
    }
}
