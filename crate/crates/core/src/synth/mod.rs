//! Scenario generation: a diagonal Gaussian mixture as the density model and an
//! analytic mmWave throughput world that labels induced scenarios.

mod gmm;
mod twin;

pub use gmm::{fit_gmm, fit_gmm_with_trace, sample_gmm, GaussianMixture, VARIANCE_FLOOR};
pub use twin::{
    generate_synthetic_dataset, schema, twin_label, write_dataset_csv, Blockage, Scenario,
    TwinWorld,
};
