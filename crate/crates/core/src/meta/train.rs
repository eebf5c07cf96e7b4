use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::lstm::{LstmState, LstmWeights, StepCache};
use super::replay::{ReplayBuffer, ReplayEntry};
use super::{apply_update, bounded_step, decay_tau, init_hidden, meta_loss, preprocess_input, seed_parameters, MetaConfig, PhiTraining};
use crate::baseline::{OptimizerKind, OptimizerState};
use crate::estimators::rademacher;
use crate::qnn::{check_theta, pseudo_gradient, CostModel, EvalCounter, ShotBudget};
use crate::{seeded_rng, Error, Result, SimRng};

/// One optimizee step as seen by observers.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaStep {
    pub meta_iter: usize,
    /// Global step index, contiguous from 0.
    pub step: usize,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub delta_cost: f64,
    /// Counter value right after this step's cost evaluation.
    pub circuit_evals: u64,
}

/// Everything recorded during one unroll, enough to update Φ afterwards.
#[derive(Debug, Clone)]
pub struct Episode {
    pub seed_theta: Vec<f64>,
    pub seed_state: LstmState,
    pub prev_cost: Option<f64>,
    pub thetas: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub end_theta: Vec<f64>,
    pub end_state: LstmState,
    /// Largest `‖θ^{t+1} − θ^t‖_∞` over the LSTM updates of this episode.
    pub max_update: f64,
    caches: Vec<StepCache>,
    omegas: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
}

impl Episode {
    pub fn last_cost(&self) -> f64 {
        *self.costs.last().expect("episodes have at least one step")
    }

    pub fn mean_cost(&self) -> f64 {
        self.costs.iter().sum::<f64>() / self.costs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaStatus {
    Converged,
    MaxIterations,
}

impl MetaStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MetaStatus::Converged => "converged",
            MetaStatus::MaxIterations => "max-iterations",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Lowest-cost parameters evaluated during training.
    pub best_theta: Vec<f64>,
    pub best_cost: f64,
    /// Parameters the next meta-iteration would have started from.
    pub end_theta: Vec<f64>,
    pub status: MetaStatus,
    pub meta_iterations: usize,
    pub max_update: f64,
    pub steps: Vec<MetaStep>,
}

struct Unroll<'a> {
    weights: &'a LstmWeights,
    cfg: &'a MetaConfig,
    explore: bool,
}

impl Unroll<'_> {
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        model: &dyn CostModel,
        theta: Vec<f64>,
        state: LstmState,
        prev_cost: Option<f64>,
        mut buffer: Option<&mut ReplayBuffer>,
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
        mut on_step: impl FnMut(usize, &[f64], f64, f64) -> Result<()>,
    ) -> Result<Episode> {
        let cfg = self.cfg;
        let t_max = cfg.unroll;
        let mut episode = Episode {
            seed_theta: theta.clone(),
            seed_state: state.clone(),
            prev_cost,
            thetas: Vec::with_capacity(t_max),
            costs: Vec::with_capacity(t_max),
            end_theta: Vec::new(),
            end_state: LstmState::zeros(0),
            max_update: 0.0,
            caches: Vec::with_capacity(t_max),
            omegas: Vec::with_capacity(t_max),
            actions: Vec::with_capacity(t_max),
        };
        let mut theta = theta;
        let mut state = state;
        let mut prev = prev_cost;
        for t in 0..t_max {
            let cost = model.cost(&theta, shots, counter, rng)?;
            let delta_cost = match prev {
                Some(p) => pseudo_gradient(p, cost),
                None => 1.0,
            };
            on_step(t, &theta, cost, delta_cost)?;
            if let Some(buf) = buffer.as_deref_mut() {
                if prev.is_some() && delta_cost > 0.0 {
                    buf.push(ReplayEntry {
                        theta: theta.clone(),
                        cost,
                        delta_cost,
                        hidden: state.clone(),
                    })?;
                }
            }
            let input = preprocess_input(&theta, delta_cost, cfg.p)?;
            let (omega, next_state, cache) = self.weights.forward_cached(&input, &state)?;
            if let Some(bad) = omega.iter().find(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("meta-optimizer produced {bad}")));
            }
            let next_theta = if self.explore {
                let action: Vec<f64> = omega
                    .iter()
                    .map(|o| {
                        let eps: f64 = StandardNormal.sample(rng);
                        cfg.alpha * o.tanh() + cfg.policy_std * eps
                    })
                    .collect();
                let next = theta
                    .iter()
                    .zip(&action)
                    .map(|(th, a)| bounded_step(*th, a.clamp(-cfg.alpha, cfg.alpha), cfg.alpha))
                    .collect();
                episode.actions.push(action);
                next
            } else {
                apply_update(&theta, &omega, cfg.alpha)?
            };
            episode.max_update = next_theta
                .iter()
                .zip(&theta)
                .map(|(a, b)| (a - b).abs())
                .fold(episode.max_update, f64::max);

            episode.thetas.push(std::mem::replace(&mut theta, next_theta));
            episode.costs.push(cost);
            episode.caches.push(cache);
            episode.omegas.push(omega);
            state = next_state;
            prev = Some(cost);
        }
        episode.end_theta = theta;
        episode.end_state = state;
        Ok(episode)
    }
}

/// The learned optimizer: Φ, its own Adam state and the run configuration.
#[derive(Debug, Clone)]
pub struct MetaOptimizer {
    cfg: MetaConfig,
    weights: LstmWeights,
    phi_opt: OptimizerState,
}

impl MetaOptimizer {
    /// Fresh Φ for an optimizee with `num_params` parameters.
    pub fn new<R: Rng + ?Sized>(cfg: MetaConfig, num_params: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let weights = LstmWeights::random(num_params + 1, cfg.hidden_size, num_params, cfg.phi_init_std, rng)?;
        Self::with_weights(cfg, weights)
    }

    pub fn with_weights(cfg: MetaConfig, weights: LstmWeights) -> Result<Self> {
        cfg.validate()?;
        if weights.hidden_size() != cfg.hidden_size || weights.input_size() != weights.output_size() + 1 {
            return Err(Error::config(format!(
                "LSTM shapes (D={}, H={}, N={}) do not fit hidden size {}",
                weights.input_size(),
                weights.hidden_size(),
                weights.output_size(),
                cfg.hidden_size
            )));
        }
        let phi_opt = OptimizerState::new(OptimizerKind::Adam, weights.num_params(), cfg.phi_lr)?;
        Ok(Self { cfg, weights, phi_opt })
    }

    pub fn config(&self) -> &MetaConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &LstmWeights {
        &self.weights
    }

    fn check_model(&self, model: &dyn CostModel) -> Result<()> {
        if model.num_params() != self.weights.output_size() {
            return Err(Error::config(format!(
                "meta-optimizer built for {} parameters, model has {}",
                self.weights.output_size(),
                model.num_params()
            )));
        }
        Ok(())
    }

    fn unroller(&self) -> Unroll<'_> {
        Unroll {
            weights: &self.weights,
            cfg: &self.cfg,
            explore: self.cfg.phi_train == PhiTraining::Reinforce,
        }
    }

    /// One meta-iteration of `T` steps from the given seed. Charges `T·m`
    /// circuit evaluations. `prev_cost` is the cost preceding the seed, `None`
    /// at the very start of training.
    #[allow(clippy::too_many_arguments)]
    pub fn run_meta_iteration(
        &self,
        model: &dyn CostModel,
        theta_seed: &[f64],
        state_seed: &LstmState,
        prev_cost: Option<f64>,
        buffer: Option<&mut ReplayBuffer>,
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
    ) -> Result<Episode> {
        self.check_model(model)?;
        check_theta(theta_seed, model.num_params())?;
        self.unroller().run(
            model,
            theta_seed.to_vec(),
            state_seed.clone(),
            prev_cost,
            buffer,
            shots,
            counter,
            rng,
            |_, _, _, _| Ok(()),
        )
    }

    /// Full meta-training loop. `observer` sees every step as it happens, so
    /// partial progress survives a later failure.
    pub fn train(
        &mut self,
        model: &dyn CostModel,
        theta0: &[f64],
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
        mut observer: impl FnMut(&MetaStep) -> Result<()>,
    ) -> Result<TrainOutcome> {
        self.check_model(model)?;
        check_theta(theta0, model.num_params())?;
        let mut buffer = ReplayBuffer::new(self.cfg.replay_capacity)?;
        let mut theta = theta0.to_vec();
        let mut state = init_hidden(self.cfg.h0_init, self.cfg.hidden_size, rng);
        let mut tau = self.cfg.tau0;
        let mut prev_cost: Option<f64> = None;
        let mut prev_mean: Option<f64> = None;
        let mut global_step = 0usize;
        let mut steps = Vec::with_capacity(self.cfg.unroll * self.cfg.max_meta_iters);
        let mut best_theta = theta.clone();
        let mut best_cost = f64::INFINITY;
        let mut status = MetaStatus::MaxIterations;
        let mut iterations = 0;
        let mut max_update: f64 = 0.0;

        for k in 0..self.cfg.max_meta_iters {
            let buf = if self.cfg.replay { Some(&mut buffer) } else { None };
            let episode = self.unroller().run(
                model,
                theta,
                state,
                prev_cost,
                buf,
                shots,
                counter,
                rng,
                |t, th, cost, delta_cost| {
                    let record = MetaStep {
                        meta_iter: k,
                        step: global_step + t,
                        theta: th.to_vec(),
                        cost,
                        delta_cost,
                        circuit_evals: counter.get(),
                    };
                    observer(&record)?;
                    steps.push(record);
                    Ok(())
                },
            )?;
            iterations = k + 1;
            global_step += self.cfg.unroll;
            max_update = max_update.max(episode.max_update);
            for (th, &c) in episode.thetas.iter().zip(&episode.costs) {
                if c < best_cost {
                    best_cost = c;
                    best_theta = th.clone();
                }
            }

            let end_cost = episode.last_cost();
            let mean = episode.mean_cost();
            if let Some(prev) = prev_cost {
                if (end_cost - prev).abs() <= self.cfg.eps_stop {
                    status = MetaStatus::Converged;
                    theta = episode.end_theta;
                    break;
                }
            }
            let last = k + 1 == self.cfg.max_meta_iters;
            if !last {
                self.update_phi(&episode, model, shots, counter, rng)?;
            }

            let diverging = prev_mean.is_some_and(|pm| mean > pm);
            let sampled = if self.cfg.replay && diverging { buffer.sample() } else { None };
            match sampled {
                Some(entry) => {
                    let (t, s) = seed_parameters(&episode.end_theta, entry, tau)?;
                    log::debug!("meta-iteration {k}: diverging, seeding with τ = {tau}");
                    theta = t;
                    state = s;
                    tau = decay_tau(tau, self.cfg.zeta, global_step as u64);
                }
                None => {
                    theta = episode.end_theta;
                    state = episode.end_state;
                }
            }
            prev_cost = Some(end_cost);
            prev_mean = Some(mean);
        }

        Ok(TrainOutcome {
            best_theta,
            best_cost,
            end_theta: theta,
            status,
            meta_iterations: iterations,
            max_update,
            steps,
        })
    }

    /// Updates Φ from a finished episode according to `phi_train`.
    pub fn update_phi(
        &mut self,
        episode: &Episode,
        model: &dyn CostModel,
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
    ) -> Result<()> {
        let grad = match self.cfg.phi_train {
            PhiTraining::Frozen => return Ok(()),
            PhiTraining::Reinforce => self.reinforce_gradient(episode)?,
            PhiTraining::SpsaOnPhi => {
                let delta = rademacher(self.weights.num_params(), rng);
                self.spsa_phi_gradient(episode, &delta, model, shots, counter, rng)?
            }
        };
        self.phi_opt.step(self.weights.as_mut_slice(), &grad)
    }

    /// SPSA estimate of `∇_Φ L` along `delta`: two unrolls from the episode's
    /// seed with `Φ ± c·δ`, sharing one random stream. Charges `2·T·m`.
    pub fn spsa_phi_gradient(
        &self,
        episode: &Episode,
        delta: &[f64],
        model: &dyn CostModel,
        shots: ShotBudget,
        counter: &EvalCounter,
        rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        if delta.len() != self.weights.num_params() {
            return Err(Error::config("perturbation must cover every entry of Φ"));
        }
        let c = self.cfg.phi_spsa_c;
        let shifted = |sign: f64| {
            let params = self.weights.as_slice().iter().zip(delta).map(|(p, d)| p + sign * c * d).collect();
            self.weights.with_params(params)
        };
        let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
        let probe_seed: u64 = rng.random();
        let w = self.cfg.loss_weights();
        let probe = |weights: &LstmWeights| -> Result<f64> {
            let unroll = Unroll {
                weights,
                cfg: &self.cfg,
                explore: false,
            };
            let mut probe_rng = seeded_rng(probe_seed, 0);
            let ep = unroll.run(
                model,
                episode.seed_theta.clone(),
                episode.seed_state.clone(),
                episode.prev_cost,
                None,
                shots,
                counter,
                &mut probe_rng,
                |_, _, _, _| Ok(()),
            )?;
            meta_loss(&ep.costs, &w)
        };
        let (l_plus, l_minus) = rayon::join(|| probe(&plus), || probe(&minus));
        let diff = l_plus? - l_minus?;
        Ok(delta.iter().map(|d| diff / (2.0 * c * d)).collect())
    }

    /// Score-function gradient of the Gaussian policy over updates. The reward
    /// of step `t` is `−w_{t+1}·C(θ^{t+1})`, centred by the episode mean; only
    /// the LSTM is differentiated.
    pub fn reinforce_gradient(&self, episode: &Episode) -> Result<Vec<f64>> {
        let steps = episode.costs.len();
        if episode.actions.len() != steps {
            return Err(Error::config("episode was recorded without exploration noise"));
        }
        let w = self.cfg.loss_weights();
        let n = self.weights.output_size();
        let mut d_omega = vec![vec![0.0; n]; steps];
        if steps >= 2 {
            let rewards: Vec<f64> = (0..steps - 1).map(|t| -w[t + 1] * episode.costs[t + 1]).collect();
            let baseline = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let (alpha, var) = (self.cfg.alpha, self.cfg.policy_std * self.cfg.policy_std);
            for (t, r) in rewards.iter().enumerate() {
                let advantage = r - baseline;
                for i in 0..n {
                    let th = episode.omegas[t][i].tanh();
                    let mean = alpha * th;
                    let score = (episode.actions[t][i] - mean) / var * alpha * (1.0 - th * th);
                    d_omega[t][i] = -advantage * score;
                }
            }
        }
        self.weights.backward(&episode.caches, &d_omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::{HiddenInit, LstmWeights};
    use crate::seeded_rng;

    /// Cost is a fixed function of θ evaluated without any circuit.
    struct Stub<F: Fn(&[f64]) -> f64 + Sync> {
        n: usize,
        m: usize,
        f: F,
    }

    impl<F: Fn(&[f64]) -> f64 + Sync> CostModel for Stub<F> {
        fn num_params(&self) -> usize {
            self.n
        }
        fn num_points(&self) -> usize {
            self.m
        }
        fn outputs(&self, theta: &[f64], _: ShotBudget, counter: &EvalCounter, _: &mut SimRng) -> Result<Vec<f64>> {
            counter.add(self.m as u64);
            Ok(vec![(self.f)(theta)])
        }
        fn loss(&self, outputs: &[f64]) -> f64 {
            outputs[0]
        }
        fn loss_slope(&self, _: &[f64]) -> Vec<f64> {
            vec![1.0]
        }
    }

    fn quadratic(m: usize) -> Stub<impl Fn(&[f64]) -> f64 + Sync> {
        Stub {
            n: 2,
            m,
            f: |t: &[f64]| t.iter().map(|x| (x - 0.5) * (x - 0.5)).sum(),
        }
    }

    fn optimizer(cfg: MetaConfig, n: usize, seed: u64) -> MetaOptimizer {
        MetaOptimizer::new(cfg, n, &mut seeded_rng(seed, 2)).unwrap()
    }

    #[test]
    fn zero_weights_hold_theta_fixed() {
        let cfg = MetaConfig {
            phi_train: PhiTraining::Frozen,
            h0_init: HiddenInit::Zero,
            ..Default::default()
        };
        let model = quadratic(1);
        let opt = MetaOptimizer::with_weights(cfg.clone(), LstmWeights::zeros(3, 20, 2)).unwrap();
        let counter = EvalCounter::new();
        let ep = opt
            .run_meta_iteration(&model, &[0.1, 0.2], &LstmState::zeros(20), None, None, ShotBudget::Exact, &counter, &mut seeded_rng(0, 3))
            .unwrap();
        assert!(ep.thetas.iter().all(|t| t == &vec![0.1, 0.2]));
        assert!(ep.costs.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(ep.end_theta, vec![0.1, 0.2]);

        let mut opt = opt;
        let out = opt
            .train(&model, &[0.1, 0.2], ShotBudget::Exact, &EvalCounter::new(), &mut seeded_rng(0, 3), |_| Ok(()))
            .unwrap();
        assert_eq!(out.status, MetaStatus::Converged);
        assert_eq!(out.meta_iterations, 2);
        assert!(out.steps.iter().all(|s| s.theta == vec![0.1, 0.2]));
        assert_eq!(opt.weights(), &LstmWeights::zeros(3, 20, 2));
    }

    #[test]
    fn one_iteration_charges_t_times_m() {
        let model = quadratic(100);
        let opt = optimizer(MetaConfig::default(), 2, 0);
        let counter = EvalCounter::new();
        let mut rng = seeded_rng(0, 3);
        let state = init_hidden(HiddenInit::Normal01, 20, &mut rng);
        opt.run_meta_iteration(&model, &[0.0, 0.0], &state, None, None, ShotBudget::Exact, &counter, &mut rng)
            .unwrap();
        assert_eq!(counter.get(), 1000);
    }

    #[test]
    fn decreasing_costs_fill_buffer() {
        // Cost falls with the step count regardless of θ.
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let model = Stub {
            n: 2,
            m: 1,
            f: |_: &[f64]| 10.0 - calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) as f64,
        };
        let opt = optimizer(MetaConfig::default(), 2, 0);
        let mut buffer = ReplayBuffer::new(16).unwrap();
        opt.run_meta_iteration(&model, &[0.0, 0.0], &LstmState::zeros(20), None, Some(&mut buffer), ShotBudget::Exact, &EvalCounter::new(), &mut seeded_rng(0, 3))
            .unwrap();
        assert_eq!(buffer.len(), 9);

        let mut small = ReplayBuffer::new(4).unwrap();
        opt.run_meta_iteration(&model, &[0.0, 0.0], &LstmState::zeros(20), Some(100.0), Some(&mut small), ShotBudget::Exact, &EvalCounter::new(), &mut seeded_rng(0, 3))
            .unwrap();
        assert_eq!(small.len(), 4);
        assert!(small.iter().all(|e| e.delta_cost > 0.0));
    }

    #[test]
    fn constant_cost_stops_after_two_iterations() {
        let model = Stub { n: 3, m: 5, f: |_: &[f64]| 0.7 };
        for phi_train in [PhiTraining::Reinforce, PhiTraining::SpsaOnPhi, PhiTraining::Frozen] {
            let cfg = MetaConfig { phi_train, max_meta_iters: 20, ..Default::default() };
            let mut opt = optimizer(cfg, 3, 4);
            let out = opt
                .train(&model, &[0.0; 3], ShotBudget::Exact, &EvalCounter::new(), &mut seeded_rng(1, 3), |_| Ok(()))
                .unwrap();
            assert_eq!(out.status, MetaStatus::Converged);
            assert_eq!(out.meta_iterations, 2);
            assert_eq!(out.steps.len(), 20);
        }
    }

    #[test]
    fn default_run_has_fifty_bounded_steps() {
        let model = quadratic(1);
        let mut opt = optimizer(MetaConfig::default(), 2, 0);
        let counter = EvalCounter::new();
        let out = opt
            .train(&model, &[2.0, -1.5], ShotBudget::Exact, &counter, &mut seeded_rng(0, 3), |_| Ok(()))
            .unwrap();
        assert_eq!(out.status, MetaStatus::MaxIterations);
        assert_eq!(out.steps.len(), 50);
        assert_eq!(counter.get(), 50);
        for (i, s) in out.steps.iter().enumerate() {
            assert_eq!(s.step, i);
            assert_eq!(s.meta_iter, i / 10);
            assert_eq!(s.circuit_evals, i as u64 + 1);
        }
        assert!(out.max_update <= 0.1 && out.max_update > 0.0);
        for pair in out.steps.windows(2) {
            if pair[1].meta_iter == pair[0].meta_iter {
                let jump = pair[1].theta.iter().zip(&pair[0].theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(jump <= 0.1);
            }
        }
        let best = out.steps.iter().map(|s| s.cost).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_cost, best);
    }

    #[test]
    fn training_is_deterministic() {
        let model = quadratic(1);
        let run = || {
            let mut opt = optimizer(MetaConfig::default(), 2, 9);
            opt.train(&model, &[1.0, 1.0], ShotBudget::Exact, &EvalCounter::new(), &mut seeded_rng(9, 3), |_| Ok(()))
                .unwrap()
                .steps
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn spsa_on_phi_charges_two_unrolls() {
        let model = quadratic(100);
        let cfg = MetaConfig { phi_train: PhiTraining::SpsaOnPhi, ..Default::default() };
        let mut opt = optimizer(cfg, 2, 0);
        let counter = EvalCounter::new();
        let mut rng = seeded_rng(0, 3);
        let ep = opt
            .run_meta_iteration(&model, &[0.3, 0.3], &LstmState::zeros(20), None, None, ShotBudget::Exact, &counter, &mut rng)
            .unwrap();
        let before = counter.get();
        let old = opt.weights().clone();
        opt.update_phi(&ep, &model, ShotBudget::Exact, &counter, &mut rng).unwrap();
        assert_eq!(counter.get() - before, 2000);
        assert_ne!(opt.weights(), &old);
    }

    #[test]
    fn spsa_on_phi_estimate_is_sign_symmetric() {
        let model = quadratic(1);
        let cfg = MetaConfig { phi_train: PhiTraining::SpsaOnPhi, ..Default::default() };
        let opt = optimizer(cfg, 2, 0);
        let counter = EvalCounter::new();
        let mut rng = seeded_rng(5, 3);
        let ep = opt
            .run_meta_iteration(&model, &[0.3, 0.3], &LstmState::zeros(20), None, None, ShotBudget::Exact, &counter, &mut rng)
            .unwrap();
        let delta = rademacher(opt.weights().num_params(), &mut rng);
        let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
        let g1 = opt.spsa_phi_gradient(&ep, &delta, &model, ShotBudget::Exact, &counter, &mut rng.clone()).unwrap();
        let g2 = opt.spsa_phi_gradient(&ep, &neg, &model, ShotBudget::Exact, &counter, &mut rng.clone()).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn frozen_update_is_a_no_op() {
        let model = quadratic(1);
        let cfg = MetaConfig { phi_train: PhiTraining::Frozen, ..Default::default() };
        let mut opt = optimizer(cfg, 2, 0);
        let counter = EvalCounter::new();
        let mut rng = seeded_rng(0, 3);
        let ep = opt
            .run_meta_iteration(&model, &[0.3, 0.3], &LstmState::zeros(20), None, None, ShotBudget::Exact, &counter, &mut rng)
            .unwrap();
        let old = opt.weights().clone();
        let before = counter.get();
        opt.update_phi(&ep, &model, ShotBudget::Exact, &counter, &mut rng).unwrap();
        assert_eq!(opt.weights(), &old);
        assert_eq!(counter.get(), before);
    }

    #[test]
    fn reinforce_costs_no_evaluations_and_moves_phi() {
        let model = quadratic(7);
        let mut opt = optimizer(MetaConfig::default(), 2, 0);
        let counter = EvalCounter::new();
        let mut rng = seeded_rng(0, 3);
        let ep = opt
            .run_meta_iteration(&model, &[0.9, 0.0], &LstmState::zeros(20), None, None, ShotBudget::Exact, &counter, &mut rng)
            .unwrap();
        let before = counter.get();
        let old = opt.weights().clone();
        opt.update_phi(&ep, &model, ShotBudget::Exact, &counter, &mut rng).unwrap();
        assert_eq!(counter.get(), before);
        assert_ne!(opt.weights(), &old);
        assert!(opt.weights().is_finite());
    }

    #[test]
    fn reinforce_gradient_matches_finite_differences() {
        // The surrogate −Σ A_t log π(a_t | Φ) with actions and advantages held
        // fixed, differentiated numerically through a replay of the episode.
        let model = quadratic(1);
        let cfg = MetaConfig { unroll: 4, hidden_size: 3, ..Default::default() };
        let opt = MetaOptimizer::new(cfg.clone(), 2, &mut seeded_rng(2, 2)).unwrap();
        let mut rng = seeded_rng(3, 3);
        let seed_state = init_hidden(HiddenInit::Normal01, 3, &mut rng);
        let ep = opt
            .run_meta_iteration(&model, &[0.2, -0.4], &seed_state, None, None, ShotBudget::Exact, &EvalCounter::new(), &mut rng)
            .unwrap();
        let grad = opt.reinforce_gradient(&ep).unwrap();

        let rewards: Vec<f64> = (0..3).map(|t| -ep.costs[t + 1]).collect();
        let baseline = rewards.iter().sum::<f64>() / 3.0;
        let surrogate = |w: &LstmWeights| -> f64 {
            let mut state = ep.seed_state.clone();
            let mut prev = None;
            let mut total = 0.0;
            for t in 0..4 {
                let dc = prev.map_or(1.0, |p: f64| p - ep.costs[t]);
                let input = preprocess_input(&ep.thetas[t], dc, cfg.p).unwrap();
                let (omega, next) = w.forward(&input, &state).unwrap();
                if t < 3 {
                    for i in 0..2 {
                        let mean = cfg.alpha * omega[i].tanh();
                        let z = (ep.actions[t][i] - mean) / cfg.policy_std;
                        total += (rewards[t] - baseline) * (-0.5 * z * z);
                    }
                }
                state = next;
                prev = Some(ep.costs[t]);
            }
            -total
        };
        let h = 1e-6;
        for idx in (0..opt.weights().num_params()).step_by(3) {
            let mut plus = opt.weights().as_slice().to_vec();
            plus[idx] += h;
            let mut minus = opt.weights().as_slice().to_vec();
            minus[idx] -= h;
            let fd = (surrogate(&opt.weights().with_params(plus).unwrap())
                - surrogate(&opt.weights().with_params(minus).unwrap()))
                / (2.0 * h);
            assert!((fd - grad[idx]).abs() < 1e-5 * (1.0 + fd.abs()), "param {idx}: {fd} vs {}", grad[idx]);
        }
    }

    #[test]
    fn mismatched_model_rejected() {
        let model = quadratic(1);
        let mut opt = optimizer(MetaConfig::default(), 3, 0);
        let res = opt.train(&model, &[0.0, 0.0], ShotBudget::Exact, &EvalCounter::new(), &mut seeded_rng(0, 3), |_| Ok(()));
        assert!(matches!(res, Err(Error::Config(_))));
    }

    #[test]
    fn observer_errors_abort_training() {
        let model = quadratic(1);
        let mut opt = optimizer(MetaConfig::default(), 2, 0);
        let mut seen = 0;
        let res = opt.train(&model, &[0.0, 0.0], ShotBudget::Exact, &EvalCounter::new(), &mut seeded_rng(0, 3), |s| {
            seen += 1;
            if s.step == 12 {
                Err(Error::numeric("stop"))
            } else {
                Ok(())
            }
        });
        assert!(matches!(res, Err(Error::Numeric(_))));
        assert_eq!(seen, 13);
    }
}
