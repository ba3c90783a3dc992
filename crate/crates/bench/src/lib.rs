//! Shared fixtures for the criterion benches.

use netal::dataset::Normalizer;
use netal::neural::{init_params, Activation, NetworkParams, NetworkSpec};
use netal::synth::{generate_synthetic_dataset, TwinWorld};

/// `n` normalized twin-world feature rows.
pub fn feature_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let samples = generate_synthetic_dataset(&TwinWorld::default(), n, seed);
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let norm = Normalizer::fit(rows.iter().copied()).expect("non-empty");
    rows.iter().map(|r| norm.normalize(r)).collect()
}

/// The default case-study regressor over the twin-world schema.
pub fn network(dropout: f64) -> (NetworkSpec, NetworkParams) {
    let spec = NetworkSpec::new(vec![19, 64, 64, 1], dropout, Activation::Relu).expect("valid spec");
    let params = init_params(&spec, 7);
    (spec, params)
}
