//! Class distance weighted cross-entropy (CDW-CE) for ordinal classification,
//! together with the competing ordinal and categorical losses it is usually
//! compared against, a small MLP testbed, and the evaluation protocol used to
//! compare them (QWK, kappa, macro-F1, MAE, one-vs-rest ROC/AUC, silhouette,
//! remission collapse).
//!
//! Module layout:
//!
//! - [`numerics`]: dense matrix, stable softmax/log helpers, seeded RNG
//! - [`losses`]: CE, CDW-CE (with and without margin), CO2, HO2, CORN, sigmoid-scaled MSE
//! - [`model`]: MLP with softmax, CORN and regression heads
//! - [`data`]: synthetic ordinal generator, CSV ingestion, stratified splits
//! - [`trainer`]: deterministic SGD with momentum and validation-based selection
//! - [`metrics`]: confusion matrices and every evaluation metric
//! - [`experiments`]: multi-trial benchmarks, α and margin sweeps, reports

pub mod data;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use data::{Dataset, Provenance, SplitSpec, Splits, SyntheticParams};
pub use error::{Error, Result};
pub use experiments::{AggregateReport, ExperimentConfig, ReportFormat, TrialReport};
pub use losses::{HeadKind, LossKind, LossResult, LossSpec};
pub use metrics::{ConfusionMatrix, MetricBundle, RocCurve};
pub use model::{Activation, Head, MlpConfig, MlpModel};
pub use numerics::{Matrix, ProbVector, SeededRng};
pub use trainer::{SelectionMetric, TrainConfig, TrainLog};
