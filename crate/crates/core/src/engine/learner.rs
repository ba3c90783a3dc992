use rayon::prelude::*;

use crate::bayesian::{self, Committee, PredictiveDistribution};
use crate::error::{Error, Result};
use crate::neural::{self, init_params, AdamState, NetworkParams, NetworkSpec, Scratch, TrainOptions};
use crate::rng;

/// Affine map between throughput in Mbps and the network's standardized output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub fn fit(ys: &[f64]) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::Empty("label set"));
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        Ok(TargetScale {
            mean,
            std: var.sqrt().max(1e-8),
        })
    }

    pub fn encode(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn decode(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// A network plus its optimizer state and target scaling; speaks Mbps.
#[derive(Debug, Clone)]
pub struct Learner {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
    pub adam: AdamState,
    pub opts: TrainOptions,
    pub scale: TargetScale,
}

impl Learner {
    pub fn new(spec: NetworkSpec, opts: TrainOptions, scale: TargetScale, init_seed: u64) -> Self {
        let params = init_params(&spec, init_seed);
        let adam = AdamState::new(&spec);
        Learner {
            spec,
            params,
            adam,
            opts,
            scale,
        }
    }

    pub fn reinitialize(&mut self, init_seed: u64) {
        self.params = init_params(&self.spec, init_seed);
        self.adam = AdamState::new(&self.spec);
    }

    /// Trains for `epochs` on Mbps targets; returns the final training MSE in Mbps^2.
    pub fn fit(
        &mut self,
        xs: &[&[f64]],
        ys: &[f64],
        epochs: usize,
        rng_seed: u64,
        reset_optimizer: bool,
    ) -> Result<f64> {
        if reset_optimizer {
            self.adam = AdamState::new(&self.spec);
        }
        let zs: Vec<f64> = ys.iter().map(|&y| self.scale.encode(y)).collect();
        let opts = TrainOptions {
            epochs,
            ..self.opts
        };
        let loss = neural::train(
            &mut self.params,
            &self.spec,
            xs,
            &zs,
            &opts,
            rng_seed,
            &mut self.adam,
        )?;
        if !self.params.all_finite() {
            return Err(Error::InvalidArgument(
                "training diverged to non-finite parameters".into(),
            ));
        }
        Ok(loss * self.scale.std * self.scale.std)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.scale.decode(neural::predict(&self.params, &self.spec, x))
    }

    pub fn predict_many(&self, xs: &[&[f64]]) -> Vec<f64> {
        let mut scratch = Scratch::default();
        xs.iter()
            .map(|x| {
                self.scale
                    .decode(neural::predict_with(&self.params, &self.spec, x, None, &mut scratch))
            })
            .collect()
    }

    /// MC-dropout distribution in Mbps.
    pub fn mc_predict(&self, x: &[f64], passes: usize, seed: u64) -> Result<PredictiveDistribution> {
        let d = bayesian::mc_predict(&self.params, &self.spec, x, passes, seed)?;
        Ok(PredictiveDistribution {
            mean: self.scale.decode(d.mean),
            epistemic_var: d.epistemic_var * self.scale.std * self.scale.std,
            ..d
        })
    }

    /// Epistemic standard deviation of each input; input `i` uses seed `item_seed(seed, keys[i])`.
    pub fn epistemic_stds(
        &self,
        inputs: &[(u64, &[f64])],
        passes: usize,
        seed: u64,
    ) -> Result<Vec<f64>> {
        inputs
            .par_iter()
            .map(|(key, x)| {
                self.mc_predict(x, passes, rng::item_seed(seed, *key))
                    .map(|d| d.epistemic_std())
            })
            .collect()
    }

    /// Aleatoric variance (Mbps^2) as the mean squared residual on a held-out fold.
    pub fn aleatoric(&self, xs: &[&[f64]], ys: &[f64]) -> Result<f64> {
        let zs: Vec<f64> = ys.iter().map(|&y| self.scale.encode(y)).collect();
        let v = bayesian::estimate_aleatoric(&self.params, &self.spec, xs, &zs)?;
        Ok(v * self.scale.std * self.scale.std)
    }
}

/// Committee members kept alongside the main learner for query-by-committee.
#[derive(Debug, Clone)]
pub struct CommitteeLearner {
    pub members: Vec<Learner>,
}

impl CommitteeLearner {
    pub fn train(
        spec: &NetworkSpec,
        opts: &TrainOptions,
        scale: TargetScale,
        xs: &[&[f64]],
        ys: &[f64],
        size: usize,
        epochs: usize,
        base_seed: u64,
    ) -> Result<Self> {
        let zs: Vec<f64> = ys.iter().map(|&y| scale.encode(y)).collect();
        let committee = bayesian::committee_train(
            spec,
            xs,
            &zs,
            size,
            base_seed,
            &TrainOptions { epochs, ..*opts },
        )?;
        let members = committee
            .members
            .into_iter()
            .map(|params| Learner {
                spec: spec.clone(),
                params,
                adam: AdamState::new(spec),
                opts: *opts,
                scale,
            })
            .collect();
        Ok(CommitteeLearner { members })
    }

    pub fn fine_tune(
        &mut self,
        xs: &[&[f64]],
        ys: &[f64],
        epochs: usize,
        base_seed: u64,
        reset_optimizer: bool,
    ) -> Result<()> {
        for (k, m) in self.members.iter_mut().enumerate() {
            m.fit(xs, ys, epochs, base_seed.wrapping_add(k as u64), reset_optimizer)?;
        }
        Ok(())
    }

    pub fn as_committee(&self) -> Result<Committee> {
        let spec = self.members[0].spec.clone();
        Committee::new(spec, self.members.iter().map(|m| m.params.clone()).collect())
    }

    /// Standard deviation of member predictions in Mbps.
    pub fn disagreement_std(&self, committee: &Committee, x: &[f64]) -> f64 {
        let scale = self.members[0].scale;
        bayesian::committee_disagreement(committee, x).sqrt() * scale.std
    }
}

/// `sqrt(mean((pred - label)^2))`.
pub fn rmse(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Shape {
            expected: predictions.len(),
            actual: labels.len(),
        });
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

/// RMSE of deterministic network predictions against labels, in the network's output units.
pub fn evaluate_rmse(
    params: &NetworkParams,
    spec: &NetworkSpec,
    xs: &[&[f64]],
    labels: &[f64],
) -> Result<f64> {
    let mut scratch = Scratch::default();
    let preds: Vec<f64> = xs
        .iter()
        .map(|x| neural::predict_with(params, spec, x, None, &mut scratch))
        .collect();
    rmse(&preds, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_hand_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn target_scale_round_trip() {
        let s = TargetScale::fit(&[100.0, 300.0]).unwrap();
        assert_eq!((s.mean, s.std), (200.0, 100.0));
        assert_eq!(s.decode(s.encode(123.0)), 123.0);
    }
}
