//! Predictive uncertainty: MC dropout, committees, and a global aleatoric estimate.

use crate::error::{Error, Result};
use crate::neural::{
    self, init_params, predict_with, AdamState, DropoutMask, NetworkParams, NetworkSpec, Scratch,
    TrainOptions,
};
use crate::rng;

/// Moments of the prediction at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub epistemic_var: f64,
    pub aleatoric_var: f64,
    pub n_passes: usize,
}

impl PredictiveDistribution {
    pub fn epistemic_std(&self) -> f64 {
        self.epistemic_var.sqrt()
    }

    pub fn total_var(&self) -> f64 {
        self.epistemic_var + self.aleatoric_var
    }
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// `passes` stochastic forward passes, pass `p` drawing its mask from seed `rng_seed + p`.
///
/// `aleatoric_var` is left at 0; callers fill it from [`estimate_aleatoric`].
pub fn mc_predict(
    params: &NetworkParams,
    spec: &NetworkSpec,
    x: &[f64],
    passes: usize,
    rng_seed: u64,
) -> Result<PredictiveDistribution> {
    if passes == 0 {
        return Err(Error::InvalidArgument("MC passes must be >= 1".into()));
    }
    if !params.matches(spec) {
        return Err(Error::InvalidArgument(
            "parameters do not match network spec".into(),
        ));
    }
    if x.len() != spec.input_dim() {
        return Err(Error::Shape {
            expected: spec.input_dim(),
            actual: x.len(),
        });
    }
    let mut scratch = Scratch::default();
    if spec.dropout_rate == 0.0 {
        let y = predict_with(params, spec, x, None, &mut scratch);
        return Ok(PredictiveDistribution {
            mean: y,
            epistemic_var: 0.0,
            aleatoric_var: 0.0,
            n_passes: passes,
        });
    }
    // Welford accumulation keeps the variance stable for large pass counts.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for p in 0..passes {
        let mut r = rng::rng(rng_seed.wrapping_add(p as u64));
        let mask = DropoutMask::sample(spec, &mut r);
        let y = predict_with(params, spec, x, Some(&mask), &mut scratch);
        let delta = y - mean;
        mean += delta / (p + 1) as f64;
        m2 += delta * (y - mean);
    }
    let epistemic_var = if passes > 1 {
        (m2 / (passes - 1) as f64).max(0.0)
    } else {
        0.0
    };
    Ok(PredictiveDistribution {
        mean,
        epistemic_var,
        aleatoric_var: 0.0,
        n_passes: passes,
    })
}

/// Mean squared residual of deterministic predictions on a held-out labeled fold.
pub fn estimate_aleatoric(
    params: &NetworkParams,
    spec: &NetworkSpec,
    xs: &[&[f64]],
    ys: &[f64],
) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    Ok(neural::mse(params, spec, xs, ys))
}

/// Independently trained networks sharing one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct Committee {
    pub spec: NetworkSpec,
    pub members: Vec<NetworkParams>,
}

impl Committee {
    pub fn new(spec: NetworkSpec, members: Vec<NetworkParams>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a committee needs at least 2 members, got {}",
                members.len()
            )));
        }
        if members.iter().any(|m| !m.matches(&spec)) {
            return Err(Error::InvalidArgument(
                "committee member does not match spec".into(),
            ));
        }
        Ok(Committee { spec, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn predictions(&self, x: &[f64]) -> Vec<f64> {
        let mut scratch = Scratch::default();
        self.members
            .iter()
            .map(|m| predict_with(m, &self.spec, x, None, &mut scratch))
            .collect()
    }
}

/// Trains `size` members; member `k` uses seed `base_seed + k` for init and shuffling.
pub fn committee_train(
    spec: &NetworkSpec,
    xs: &[&[f64]],
    ys: &[f64],
    size: usize,
    base_seed: u64,
    opts: &TrainOptions,
) -> Result<Committee> {
    if size < 2 {
        return Err(Error::InvalidArgument(format!(
            "committee size must be >= 2, got {size}"
        )));
    }
    if xs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let members = (0..size as u64)
        .map(|k| {
            let seed = base_seed.wrapping_add(k);
            let mut params = init_params(spec, seed);
            let mut state = AdamState::new(spec);
            neural::train(&mut params, spec, xs, ys, opts, seed, &mut state)?;
            Ok(params)
        })
        .collect::<Result<Vec<_>>>()?;
    Committee::new(spec.clone(), members)
}

/// Unbiased variance of the members' deterministic predictions at `x`.
pub fn committee_disagreement(committee: &Committee, x: &[f64]) -> f64 {
    sample_variance(&committee.predictions(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, AdamHyper, Layer};

    fn spec(dropout: f64) -> NetworkSpec {
        NetworkSpec::new(vec![2, 8, 8, 1], dropout, Activation::Relu).unwrap()
    }

    #[test]
    fn no_dropout_means_zero_epistemic_variance() {
        let s = spec(0.0);
        let p = init_params(&s, 1);
        for passes in [1, 5, 100] {
            let d = mc_predict(&p, &s, &[0.3, -0.7], passes, 4).unwrap();
            assert_eq!(d.epistemic_var, 0.0);
            assert_eq!(d.n_passes, passes);
        }
    }

    #[test]
    fn single_pass_has_zero_variance() {
        let s = spec(0.5);
        let p = init_params(&s, 1);
        assert_eq!(mc_predict(&p, &s, &[1.0, 1.0], 1, 0).unwrap().epistemic_var, 0.0);
        assert!(mc_predict(&p, &s, &[1.0, 1.0], 0, 0).is_err());
    }

    #[test]
    fn mc_predict_is_deterministic_per_seed() {
        let s = spec(0.3);
        let p = init_params(&s, 2);
        let a = mc_predict(&p, &s, &[0.5, 0.1], 40, 77).unwrap();
        assert_eq!(a, mc_predict(&p, &s, &[0.5, 0.1], 40, 77).unwrap());
        assert!(a.epistemic_var > 0.0);
    }

    #[test]
    fn aleatoric_hand_cases() {
        let s = NetworkSpec::new(vec![1, 1], 0.0, Activation::Relu).unwrap();
        let constant = NetworkParams {
            layers: vec![Layer { inputs: 1, outputs: 1, weights: vec![0.0], bias: vec![5.0] }],
        };
        let xs: Vec<&[f64]> = vec![&[0.0], &[1.0]];
        assert_eq!(estimate_aleatoric(&constant, &s, &xs, &[4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(estimate_aleatoric(&constant, &s, &xs, &[5.0, 5.0]).unwrap(), 0.0);
        assert!(matches!(
            estimate_aleatoric(&constant, &s, &[], &[]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn variance_hand_cases() {
        assert_eq!(sample_variance(&[1.0, 3.0]), 2.0);
        assert_eq!(sample_variance(&[0.0, 1.0, 2.0]), 1.0);
        assert_eq!(sample_variance(&[4.0]), 0.0);
    }

    #[test]
    fn committee_rules() {
        let s = spec(0.0);
        let p = init_params(&s, 0);
        let same = Committee::new(s.clone(), vec![p.clone(), p.clone(), p.clone()]).unwrap();
        assert_eq!(committee_disagreement(&same, &[0.2, 0.4]), 0.0);
        assert!(Committee::new(s.clone(), vec![p]).is_err());

        let xs: Vec<&[f64]> = vec![&[0.0, 1.0], &[1.0, 0.0], &[0.5, 0.5]];
        let ys = [1.0, 2.0, 1.5];
        let opts = TrainOptions { epochs: 3, batch_size: 2, adam: AdamHyper::default() };
        assert!(committee_train(&s, &xs, &ys, 1, 0, &opts).is_err());
        let a = committee_train(&s, &xs, &ys, 2, 10, &opts).unwrap();
        let b = committee_train(&s, &xs, &ys, 2, 10, &opts).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.members[0], a.members[1]);
    }

    #[test]
    fn disagreement_ignores_member_order() {
        let s = spec(0.0);
        let members: Vec<_> = (0..4).map(|k| init_params(&s, k)).collect();
        let mut rev = members.clone();
        rev.reverse();
        let a = Committee::new(s.clone(), members).unwrap();
        let b = Committee::new(s, rev).unwrap();
        let x = [0.9, -0.4];
        assert!((committee_disagreement(&a, &x) - committee_disagreement(&b, &x)).abs() < 1e-12);
    }
}
