//! Active-learning loops: pool-based, stream-based and membership query synthesis.
//!
//! All three share [`LoopState`]: the pool with a normalized-feature cache, the
//! learner, the budget, and a fixed validation fold carved from the seed set for
//! the aleatoric estimate. Randomness for iteration `k` is derived from
//! `master_seed ^ k` plus a per-purpose tag, see [`crate::rng::iteration_seed`].

mod curve;
mod learner;
mod oracle;
mod pool;
mod stream;
mod synthesis;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

pub use curve::{sig6, CurveRow, LearningCurve, CURVE_HEADER};
pub use learner::{evaluate_rmse, rmse, CommitteeLearner, Learner, TargetScale};
pub use oracle::{CollectSource, Oracle, PoolOracle};
pub use pool::run_pool_loop;
pub use stream::{rolling_quantile, run_stream_loop, StreamDecision, StreamPolicy, StreamRun};
pub use synthesis::{run_synthesis_loop, SynthesisConfig, SynthesisSource};

use crate::acquisition::{Budget, CollectPolicy, Strategy};
use crate::dataset::{fit_normalizer, DataPool};
use crate::error::{Error, Result};
use crate::neural::{Activation, AdamHyper, NetworkSpec, TrainOptions};
use crate::rng;

/// How the learner is updated after each acquisition round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefitMode {
    /// Continue from the current parameters for `finetune_epochs`.
    WarmStart,
    /// Re-initialize and train for `initial_epochs`.
    ColdRestart,
}

impl RefitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RefitMode::WarmStart => "warm",
            RefitMode::ColdRestart => "cold",
        }
    }
}

impl std::str::FromStr for RefitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "warm" => Ok(RefitMode::WarmStart),
            "cold" => Ok(RefitMode::ColdRestart),
            other => Err(format!("unknown refit mode `{other}` (expected warm or cold)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub hidden_layers: Vec<usize>,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub weight_init_scale: f64,
    pub train_batch_size: usize,
    pub adam: AdamHyper,
    pub initial_epochs: usize,
    pub finetune_epochs: usize,
    pub refit: RefitMode,
    /// Start each refit with fresh Adam moments.
    pub reset_optimizer: bool,
    pub strategy: Strategy,
    pub batch_size: usize,
    pub iterations: usize,
    pub mc_passes: usize,
    pub committee_size: usize,
    pub hybrid_beta: f64,
    pub budget_total: f64,
    pub annotation_cost: f64,
    pub collection_cost: f64,
    pub collect: CollectPolicy,
    /// Share of the seed labeled set held out for the aleatoric estimate.
    pub validation_fraction: f64,
    /// Test samples (lowest ids) over which mean epistemic std is reported.
    pub epistemic_probe_size: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            hidden_layers: vec![64, 64],
            dropout_rate: 0.2,
            activation: Activation::Relu,
            weight_init_scale: 1.0,
            train_batch_size: 64,
            adam: AdamHyper::default(),
            initial_epochs: 100,
            finetune_epochs: 20,
            refit: RefitMode::WarmStart,
            reset_optimizer: true,
            strategy: Strategy::Uncertainty,
            batch_size: 4,
            iterations: 10,
            mc_passes: 50,
            committee_size: 3,
            hybrid_beta: 0.5,
            budget_total: f64::INFINITY,
            annotation_cost: 1.0,
            collection_cost: 0.25,
            collect: CollectPolicy::default(),
            validation_fraction: 0.1,
            epistemic_probe_size: 1000,
        }
    }
}

impl LoopConfig {
    pub fn network_spec(&self, input_dim: usize) -> Result<NetworkSpec> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(1);
        let spec = NetworkSpec {
            layer_sizes: sizes,
            dropout_rate: self.dropout_rate,
            activation: self.activation,
            weight_init_scale: self.weight_init_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.initial_epochs,
            batch_size: self.train_batch_size,
            adam: self.adam,
        }
    }

    pub fn budget(&self) -> Result<Budget> {
        Budget::new(self.budget_total, self.annotation_cost, self.collection_cost)
    }
}

/// Everything a finished loop leaves behind.
#[derive(Debug, Clone)]
pub struct LoopRun {
    pub curve: LearningCurve,
    pub pool: DataPool,
    /// Ids labeled in each iteration; entry 0 is empty.
    pub queried: Vec<Vec<usize>>,
    /// Ids collected (unlabeled) in each iteration; entry 0 is empty.
    pub collected: Vec<Vec<usize>>,
    pub budget: Budget,
    pub seed_labeled: usize,
    /// Oracle annotate calls plus synthesized labels.
    pub labels_granted: usize,
    pub samples_collected: usize,
}

// Seed purposes.
const INIT: u64 = 1;
const TRAIN: u64 = 2;
const SCORE: u64 = 3;
const SELECT: u64 = 4;
const COMMITTEE: u64 = 5;
const PROBE: u64 = 6;
const VALIDATION: u64 = 7;
const GMM: u64 = 8;
const PROPOSE: u64 = 9;
const RENDER: u64 = 10;
const LABEL: u64 = 11;

/// Mutable state shared by the three loops.
pub(crate) struct LoopState<'a> {
    cfg: &'a LoopConfig,
    master: u64,
    pub(crate) pool: DataPool,
    /// Normalized features of every sample in the pool.
    pub(crate) feats: BTreeMap<usize, Vec<f64>>,
    validation: BTreeSet<usize>,
    pub(crate) learner: Learner,
    pub(crate) committee: Option<CommitteeLearner>,
    pub(crate) budget: Budget,
    probe: Vec<Vec<f64>>,
    test_ids: Vec<usize>,
    seed_labeled: usize,
}

impl<'a> LoopState<'a> {
    /// Normalizes, carves the validation fold, and trains the iteration-0 model.
    pub(crate) fn new(
        cfg: &'a LoopConfig,
        mut pool: DataPool,
        master: u64,
        probe: Option<&[Vec<f64>]>,
    ) -> Result<Self> {
        if pool.labeled().is_empty() {
            return Err(Error::Empty("seed labeled set"));
        }
        if pool.test().is_empty() {
            return Err(Error::Empty("test set"));
        }
        if cfg.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if pool.normalizer().is_none() {
            let n = fit_normalizer(&pool)?;
            pool.set_normalizer(n)?;
        }
        let normalizer = pool.normalizer().expect("set above").clone();
        let feats: BTreeMap<usize, Vec<f64>> = pool
            .samples()
            .map(|s| (s.id, normalizer.normalize(&s.features)))
            .collect();

        let seed_ids: Vec<usize> = pool.labeled().iter().copied().collect();
        let n_val = if cfg.validation_fraction > 0.0 && seed_ids.len() >= 2 {
            ((seed_ids.len() as f64 * cfg.validation_fraction).floor() as usize)
                .clamp(1, seed_ids.len() - 1)
        } else {
            0
        };
        let mut shuffled = seed_ids.clone();
        shuffled.shuffle(&mut rng::rng(rng::iteration_seed(master, 0, VALIDATION)));
        let validation: BTreeSet<usize> = shuffled[..n_val].iter().copied().collect();

        let spec = cfg.network_spec(pool.feature_dim())?;
        let train_labels: Vec<f64> = seed_ids
            .iter()
            .filter(|id| !validation.contains(id))
            .filter_map(|id| pool.sample(*id).and_then(|s| s.label))
            .collect();
        let scale = TargetScale::fit(&train_labels)?;
        let learner = Learner::new(
            spec,
            cfg.train_options(),
            scale,
            rng::iteration_seed(master, 0, INIT),
        );

        let probe = match probe {
            Some(p) => p.iter().map(|x| normalizer.normalize(x)).collect(),
            None => pool
                .test()
                .iter()
                .take(cfg.epistemic_probe_size)
                .map(|id| feats[id].clone())
                .collect(),
        };
        let test_ids = pool.test().iter().copied().collect();
        let seed_labeled = pool.labeled().len();
        let mut state = LoopState {
            cfg,
            master,
            pool,
            feats,
            validation,
            learner,
            committee: None,
            budget: cfg.budget()?,
            probe,
            test_ids,
            seed_labeled,
        };

        let (xs, ys) = state.training_set()?;
        let mut learner = state.learner.clone();
        learner.fit(
            &xs,
            &ys,
            cfg.initial_epochs,
            rng::iteration_seed(master, 0, TRAIN),
            true,
        )?;
        let committee = if cfg.strategy == Strategy::Qbc {
            Some(CommitteeLearner::train(
                &learner.spec,
                &cfg.train_options(),
                scale,
                &xs,
                &ys,
                cfg.committee_size,
                cfg.initial_epochs,
                rng::iteration_seed(master, 0, COMMITTEE),
            )?)
        } else {
            None
        };
        state.learner = learner;
        state.committee = committee;
        Ok(state)
    }

    pub(crate) fn seed(&self, iteration: usize, purpose: u64) -> u64 {
        rng::iteration_seed(self.master, iteration, purpose)
    }

    /// Labeled ids minus the validation fold.
    fn training_ids(&self) -> Vec<usize> {
        self.pool
            .labeled()
            .iter()
            .filter(|id| !self.validation.contains(id))
            .copied()
            .collect()
    }

    fn training_set(&self) -> Result<(Vec<&[f64]>, Vec<f64>)> {
        let ids = self.training_ids();
        if let Some(id) = ids.iter().find(|id| self.pool.test().contains(id)) {
            return Err(Error::InvalidArgument(format!(
                "test sample {id} reached the training set"
            )));
        }
        let xs = ids.iter().map(|id| self.feats[id].as_slice()).collect();
        let ys = ids
            .iter()
            .map(|id| {
                self.pool
                    .sample(*id)
                    .and_then(|s| s.label)
                    .ok_or_else(|| Error::InvalidArgument(format!("labeled sample {id} has no label")))
            })
            .collect::<Result<_>>()?;
        Ok((xs, ys))
    }

    /// Caches normalized features for ids added after construction.
    pub(crate) fn register(&mut self, ids: &[usize]) {
        let normalizer = self.pool.normalizer().expect("normalizer fitted").clone();
        for id in ids {
            if let Some(s) = self.pool.sample(*id) {
                self.feats.insert(*id, normalizer.normalize(&s.features));
            }
        }
    }

    /// Updates learner (and committee) after new labels arrived in `iteration`.
    pub(crate) fn refit(&mut self, iteration: usize) -> Result<()> {
        let cfg = self.cfg;
        let train_seed = self.seed(iteration, TRAIN);
        let (epochs, cold) = match cfg.refit {
            RefitMode::WarmStart => (cfg.finetune_epochs, false),
            RefitMode::ColdRestart => (cfg.initial_epochs, true),
        };
        if cold {
            let s = self.seed(iteration, INIT);
            self.learner.reinitialize(s);
        }
        let committee_seed = self.seed(iteration, COMMITTEE);
        let (xs, ys) = self.training_set()?;
        let mut learner = self.learner.clone();
        learner.fit(&xs, &ys, epochs, train_seed, cfg.reset_optimizer || cold)?;
        let committee = match &self.committee {
            Some(_) if cold => Some(CommitteeLearner::train(
                &learner.spec,
                &cfg.train_options(),
                learner.scale,
                &xs,
                &ys,
                cfg.committee_size,
                cfg.initial_epochs,
                committee_seed,
            )?),
            Some(c) => {
                let mut c = c.clone();
                c.fine_tune(&xs, &ys, epochs, committee_seed, cfg.reset_optimizer)?;
                Some(c)
            }
            None => None,
        };
        self.learner = learner;
        self.committee = committee;
        Ok(())
    }

    /// Uncertainty score per unlabeled id for strategies that need one.
    pub(crate) fn unlabeled_scores(&self, iteration: usize) -> Result<Option<BTreeMap<usize, f64>>> {
        let ids: Vec<usize> = self.pool.unlabeled().iter().copied().collect();
        match self.cfg.strategy {
            Strategy::Uncertainty | Strategy::Hybrid => {
                let inputs: Vec<(u64, &[f64])> = ids
                    .iter()
                    .map(|id| (*id as u64, self.feats[id].as_slice()))
                    .collect();
                let stds = self.learner.epistemic_stds(
                    &inputs,
                    self.cfg.mc_passes,
                    self.seed(iteration, SCORE),
                )?;
                Ok(Some(ids.into_iter().zip(stds).collect()))
            }
            Strategy::Qbc => {
                let members = self
                    .committee
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("committee not trained".into()))?;
                let committee = members.as_committee()?;
                Ok(Some(
                    ids.into_iter()
                        .map(|id| (id, members.disagreement_std(&committee, &self.feats[&id])))
                        .collect(),
                ))
            }
            Strategy::Random | Strategy::Coreset => Ok(None),
        }
    }

    pub(crate) fn test_rmse(&self) -> Result<f64> {
        let xs: Vec<&[f64]> = self.test_ids.iter().map(|id| self.feats[id].as_slice()).collect();
        let ys: Vec<f64> = self
            .test_ids
            .iter()
            .map(|id| self.pool.sample(*id).and_then(|s| s.label).unwrap_or(f64::NAN))
            .collect();
        rmse(&self.learner.predict_many(&xs), &ys)
    }

    pub(crate) fn mean_probe_std(&self) -> Result<f64> {
        if self.probe.is_empty() {
            return Ok(0.0);
        }
        let inputs: Vec<(u64, &[f64])> = self
            .probe
            .iter()
            .enumerate()
            .map(|(i, x)| (i as u64, x.as_slice()))
            .collect();
        // Same masks every iteration so changes reflect the model, not the draw.
        let stds = self
            .learner
            .epistemic_stds(&inputs, self.cfg.mc_passes, self.seed(0, PROBE))?;
        Ok(stds.iter().sum::<f64>() / stds.len() as f64)
    }

    fn aleatoric(&self) -> Result<f64> {
        // Without a validation fold the training residual stands in.
        let ids: Vec<usize> = if self.validation.is_empty() {
            self.training_ids()
        } else {
            self.validation.iter().copied().collect()
        };
        let xs: Vec<&[f64]> = ids.iter().map(|id| self.feats[id].as_slice()).collect();
        let ys: Vec<f64> = ids
            .iter()
            .filter_map(|id| self.pool.sample(*id).and_then(|s| s.label))
            .collect();
        self.learner.aleatoric(&xs, &ys)
    }

    pub(crate) fn row(&self, iteration: usize) -> Result<CurveRow> {
        Ok(CurveRow {
            iteration,
            labeled_count: self.pool.labeled().len(),
            budget_spent: self.budget.spent,
            test_rmse: self.test_rmse()?,
            mean_epistemic_std: self.mean_probe_std()?,
            aleatoric_var: self.aleatoric()?,
        })
    }

    /// Partition and budget checks run after every iteration.
    pub(crate) fn audit(&self) -> Result<()> {
        self.pool.check_invariants()?;
        if self.budget.spent > self.budget.total {
            return Err(Error::InvalidArgument(format!(
                "budget overspent: {} > {}",
                self.budget.spent, self.budget.total
            )));
        }
        if self.test_ids.len() != self.pool.test().len()
            || self.test_ids.iter().any(|id| !self.pool.test().contains(id))
        {
            return Err(Error::InvalidArgument("test set changed".into()));
        }
        Ok(())
    }

    pub(crate) fn into_run(
        self,
        curve: LearningCurve,
        queried: Vec<Vec<usize>>,
        collected: Vec<Vec<usize>>,
        labels_granted: usize,
        samples_collected: usize,
    ) -> LoopRun {
        LoopRun {
            curve,
            pool: self.pool,
            queried,
            collected,
            budget: self.budget,
            seed_labeled: self.seed_labeled,
            labels_granted,
            samples_collected,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_case_study_choices() {
        let c = LoopConfig::default();
        assert_eq!(c.batch_size, 4);
        assert_eq!(c.iterations, 10);
        assert_eq!(c.network_spec(19).unwrap().layer_sizes, vec![19, 64, 64, 1]);
        assert_eq!(c.mc_passes, 50);
        assert_eq!(c.finetune_epochs, 20);
    }

    #[test]
    fn refit_tokens() {
        assert_eq!("warm".parse::<RefitMode>().unwrap(), RefitMode::WarmStart);
        assert_eq!("cold".parse::<RefitMode>().unwrap(), RefitMode::ColdRestart);
        assert!("hot".parse::<RefitMode>().is_err());
    }
}
