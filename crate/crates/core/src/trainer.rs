//! Epoch orchestration over a fixed list of training instances.
//!
//! A [`Trainer`] owns its model, its instances and a single RNG stream. The
//! stream is used, in order, for weight initialization, per-epoch shuffles
//! and negative draws, so `(corpus, config, plan)` determine every result.
//! Epochs are entered lazily when their first instance is consumed, which
//! makes `step_n(a)` followed by `step_n(b)` identical to `step_n(a + b)`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelConfig};
use crate::noise::Rng;
use crate::vocab::{windows, Instance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    #[default]
    Constant,
    /// `eta0 · (1 - t/T)` over the planned `T` steps, floored at `1e-4 · eta0`.
    LinearDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub epochs: usize,
    pub eta0: f64,
    pub schedule: Schedule,
    /// Seeded permutation of the instances at the start of every epoch.
    pub shuffle: bool,
    pub seed: u64,
    /// Progress callback granularity in instances; 0 disables it.
    pub report_every: u64,
}

impl TrainPlan {
    pub fn new(epochs: usize, eta0: f64, seed: u64) -> Self {
        Self { epochs, eta0, schedule: Schedule::Constant, shuffle: false, seed, report_every: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.eta0.is_finite() && self.eta0 >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be finite and >= 0, got {}", self.eta0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean pre-update loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub instances: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub losses: Vec<f64>,
    pub mean_loss: f64,
    pub instances_done: u64,
    pub epoch: u64,
    pub position: usize,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    instances: Vec<Instance>,
    plan: TrainPlan,
    rng: Rng,
    order: Vec<usize>,
    epoch: u64,
    position: usize,
    steps_done: u64,
}

impl Trainer {
    pub fn new(config: ModelConfig, counts: &[u64], instances: Vec<Instance>, plan: TrainPlan) -> Result<Self> {
        plan.validate()?;
        if instances.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut rng = Rng::new(plan.seed);
        let mut config = config;
        config.eta = plan.eta0;
        let model = Model::new(config, counts, &mut rng)?;
        for inst in &instances {
            model.validate_instance(inst)?;
        }
        let order = (0..instances.len()).collect();
        Ok(Self { model, instances, plan, rng, order, epoch: 0, position: 0, steps_done: 0 })
    }

    /// Builds instances from a word-id sequence with the given window.
    pub fn from_corpus(
        ids: &[usize],
        window: usize,
        config: ModelConfig,
        counts: &[u64],
        plan: TrainPlan,
    ) -> Result<Self> {
        let instances = windows(ids, window, config.architecture);
        Self::new(config, counts, instances, plan)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn plan(&self) -> &TrainPlan {
        &self.plan
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    /// Completed epochs plus the one in progress.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn position(&self) -> usize {
        self.position
    }

    /// Changes the base learning rate for all subsequent steps.
    pub fn set_learning_rate(&mut self, eta: f64) -> Result<()> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {eta}")));
        }
        self.plan.eta0 = eta;
        Ok(())
    }

    pub fn current_eta(&self) -> f64 {
        let eta0 = self.plan.eta0;
        match self.plan.schedule {
            Schedule::Constant => eta0,
            Schedule::LinearDecay => {
                let total = (self.plan.epochs * self.instances.len()) as f64;
                (eta0 * (1.0 - self.steps_done as f64 / total)).max(1e-4 * eta0)
            }
        }
    }

    fn step_one(&mut self) -> Result<f64> {
        if self.position == 0 {
            self.epoch += 1;
            if self.plan.shuffle {
                self.order = (0..self.instances.len()).collect();
                self.rng.shuffle(&mut self.order);
            }
        }
        let eta = self.current_eta();
        self.model.config.eta = eta;
        let inst = &self.instances[self.order[self.position]];
        let report = self.model.train_step(inst, &mut self.rng).map_err(|e| match e {
            Error::NonFiniteLoss { loss, .. } => Error::NonFiniteLoss { loss, instance: self.steps_done, eta },
            Error::NonFiniteWeights { .. } => Error::NonFiniteWeights { instance: self.steps_done, eta },
            other => other,
        })?;
        self.steps_done += 1;
        self.position = (self.position + 1) % self.instances.len();
        Ok(report.loss)
    }

    /// Consumes exactly `n` instances, wrapping into further epochs as needed.
    pub fn step_n(&mut self, n: u64) -> Result<StepSummary> {
        let mut losses = Vec::with_capacity(n as usize);
        for _ in 0..n {
            losses.push(self.step_one()?);
        }
        let mean_loss = if losses.is_empty() { 0.0 } else { losses.iter().sum::<f64>() / losses.len() as f64 };
        Ok(StepSummary {
            losses,
            mean_loss,
            instances_done: self.steps_done,
            epoch: self.epoch,
            position: self.position,
        })
    }

    /// Runs `plan.epochs` full passes. `progress` receives
    /// `(instances_done, mean loss since the previous report)` every
    /// `plan.report_every` instances.
    pub fn train(&mut self, mut progress: impl FnMut(u64, f64)) -> Result<TrainReport> {
        let start = Instant::now();
        let per_epoch = self.instances.len();
        let mut epoch_losses = Vec::with_capacity(self.plan.epochs);
        let mut window = (0.0, 0u64);
        for _ in 0..self.plan.epochs {
            let mut total = 0.0;
            for _ in 0..per_epoch {
                let loss = self.step_one()?;
                total += loss;
                window.0 += loss;
                window.1 += 1;
                if self.plan.report_every > 0 && self.steps_done.is_multiple_of(self.plan.report_every) {
                    progress(self.steps_done, window.0 / window.1 as f64);
                    window = (0.0, 0);
                }
            }
            epoch_losses.push(total / per_epoch as f64);
        }
        Ok(TrainReport { epoch_losses, instances: self.steps_done, wall_time: start.elapsed() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, Objective};
    use std::f64::consts::LN_2;

    fn abab(pairs: usize) -> Vec<usize> {
        (0..2 * pairs).map(|i| i % 2).collect()
    }

    fn config(a: Architecture, o: Objective) -> ModelConfig {
        ModelConfig { vocab_size: 2, dim: 2, architecture: a, objective: o, negatives: 1, eta: 0.1 }
    }

    #[test]
    fn zero_eta_freezes_weights() {
        let ids = abab(10);
        let mut t =
            Trainer::from_corpus(&ids, 1, config(Architecture::Cbow, Objective::Softmax), &[10, 10], TrainPlan::new(3, 0.0, 1))
                .unwrap();
        let init = t.model().state.clone();
        let report = t.train(|_, _| {}).unwrap();
        assert_eq!(t.model().state, init);
        assert!(report.epoch_losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn alternating_corpus_loss_decreases() {
        let ids = abab(50);
        let mut t = Trainer::from_corpus(
            &ids,
            1,
            config(Architecture::Cbow, Objective::Softmax),
            &[50, 50],
            TrainPlan::new(10, 0.1, 3),
        )
        .unwrap();
        let first = t.step_n(1).unwrap();
        assert!((first.losses[0] - LN_2).abs() < 1e-12);

        let mut t = Trainer::from_corpus(
            &ids,
            1,
            config(Architecture::Cbow, Objective::Softmax),
            &[50, 50],
            TrainPlan::new(10, 0.1, 3),
        )
        .unwrap();
        let report = t.train(|_, _| {}).unwrap();
        assert_eq!(report.instances, 1000);
        for w in report.epoch_losses.windows(2) {
            assert!(w[1] < w[0], "{:?}", report.epoch_losses);
        }
    }

    #[test]
    fn same_seed_same_result() {
        let ids: Vec<usize> = [0, 1, 2, 0, 3, 1, 2, 2, 0, 1].repeat(5);
        let cfg = ModelConfig {
            vocab_size: 4,
            dim: 3,
            architecture: Architecture::SkipGram,
            objective: Objective::Negative,
            negatives: 2,
            eta: 0.05,
        };
        let mut plan = TrainPlan::new(4, 0.05, 9);
        plan.shuffle = true;
        let run = || {
            let mut t = Trainer::from_corpus(&ids, 2, cfg.clone(), &[15, 15, 15, 5], plan.clone()).unwrap();
            let r = t.train(|_, _| {}).unwrap();
            (r.epoch_losses, t.model().state.clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step_n_wraps_and_composes() {
        let ids: Vec<usize> = (0..100).map(|i| (i * 7) % 5).collect();
        let cfg = ModelConfig {
            vocab_size: 5,
            dim: 3,
            architecture: Architecture::Cbow,
            objective: Objective::Negative,
            negatives: 2,
            eta: 0.05,
        };
        let mut plan = TrainPlan::new(1, 0.05, 4);
        plan.shuffle = true;
        let make = || Trainer::from_corpus(&ids, 2, cfg.clone(), &[20; 5], plan.clone()).unwrap();

        let mut a = make();
        let s = a.step_n(500).unwrap();
        assert_eq!(s.losses.len(), 500);
        assert_eq!(a.epoch(), 5);
        assert_eq!(a.position(), 0);

        let mut b = make();
        b.step_n(250).unwrap();
        b.step_n(250).unwrap();
        assert_eq!(a.model().state, b.model().state);

        let mut c = make();
        c.step_n(1).unwrap();
        assert_eq!(c.steps_done(), 1);
    }

    #[test]
    fn linear_decay_has_a_floor() {
        let ids = abab(5);
        let mut plan = TrainPlan::new(1, 1.0, 0);
        plan.schedule = Schedule::LinearDecay;
        let mut t = Trainer::from_corpus(&ids, 1, config(Architecture::Cbow, Objective::Softmax), &[5, 5], plan).unwrap();
        assert_eq!(t.current_eta(), 1.0);
        t.step_n(5).unwrap();
        assert!((t.current_eta() - 0.5).abs() < 1e-15);
        t.step_n(20).unwrap();
        assert_eq!(t.current_eta(), 1e-4);
    }

    #[test]
    fn progress_callback_granularity() {
        let ids = abab(10);
        let mut plan = TrainPlan::new(2, 0.1, 0);
        plan.report_every = 8;
        let mut t = Trainer::from_corpus(&ids, 1, config(Architecture::Cbow, Objective::Hierarchical), &[10, 10], plan).unwrap();
        let mut seen = Vec::new();
        t.train(|n, mean| {
            assert!(mean.is_finite());
            seen.push(n)
        })
        .unwrap();
        assert_eq!(seen, vec![8, 16, 24, 32, 40]);
    }

    #[test]
    fn rejects_bad_plans_and_rates() {
        let ids = abab(3);
        let cfg = config(Architecture::Cbow, Objective::Softmax);
        assert!(Trainer::from_corpus(&ids, 1, cfg.clone(), &[3, 3], TrainPlan::new(0, 0.1, 0)).is_err());
        assert_eq!(
            Trainer::new(cfg.clone(), &[3, 3], Vec::new(), TrainPlan::new(1, 0.1, 0)).unwrap_err(),
            Error::EmptyCorpus
        );
        let mut t = Trainer::from_corpus(&ids, 1, cfg, &[3, 3], TrainPlan::new(1, 0.1, 0)).unwrap();
        assert!(t.set_learning_rate(0.0).is_err());
        assert!(t.set_learning_rate(-1.0).is_err());
        t.set_learning_rate(0.05).unwrap();
        assert_eq!(t.current_eta(), 0.05);
    }

    #[test]
    fn diverging_run_reports_instance() {
        let ids = abab(5);
        let cfg = ModelConfig { dim: 2, ..config(Architecture::Cbow, Objective::Softmax) };
        let mut t = Trainer::from_corpus(&ids, 1, cfg, &[5, 5], TrainPlan::new(50, 1e300, 0)).unwrap();
        let err = t.train(|_, _| {}).unwrap_err();
        assert!(matches!(err, Error::NonFiniteWeights { .. } | Error::NonFiniteLoss { .. }), "{err:?}");
        assert!(t.model().state.is_finite());
    }
}
