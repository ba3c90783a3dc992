//! Cost-aware active learning for network telemetry regression.
//!
//! The crate is organised around the active-learning cycle:
//!
//! * [`dataset`] ingests telemetry CSVs and manages labeled / unlabeled / test partitions.
//! * [`neural`] is the learner: a small feed-forward regressor with dropout and Adam.
//! * [`bayesian`] turns the learner into predictive distributions (MC dropout, committees).
//! * [`acquisition`] holds the query strategies and the budgeted acquisition decision.
//! * [`engine`] runs pool-based, stream-based and synthesis loops against an oracle.
//! * [`synth`] provides the density model and the analytic twin world used as an oracle.
//! * [`harness`] parses experiment configs and writes learning curves and summaries.

pub mod acquisition;
pub mod bayesian;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod harness;
pub mod neural;
pub mod rng;
pub mod synth;

pub use acquisition::{AcquisitionDecision, Budget, CollectPolicy, Region, Strategy};
pub use bayesian::{Committee, PredictiveDistribution};
pub use dataset::{DataPool, Normalizer, Origin, Sample};
pub use engine::{CurveRow, LearningCurve, LoopConfig, StreamPolicy};
pub use error::{Error, Result};
pub use neural::{Activation, AdamHyper, NetworkParams, NetworkSpec};
pub use synth::{GaussianMixture, TwinWorld};
