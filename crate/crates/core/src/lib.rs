//! Disentanglement metrics for sequential representations.
//!
//! The engine pairs a table of ground-truth factors with a tensor of codes
//! `(N, d, T)` and scores how each code dimension relates to each factor:
//! information-based metrics (MIG, JEMMIG), interventional robustness (IRS),
//! predictor-based explicitness, and per-dimension linear probing.

pub mod dataset;
pub mod discretize;
pub mod error;
pub mod info;
pub mod irs;
pub mod oracle;
pub mod predictor;
pub mod probe;
pub mod report;
pub mod seed;
pub mod synth;

pub use dataset::{
    load_code_tensor, load_factor_table, load_manifest_dataset, save_code_tensor, save_factor_table,
    validate_pairing, CodeTensor, DatasetManifest, Factor, FactorData, FactorTable, IngestionConfig,
    PairedDataset, VersionTag,
};
pub use discretize::{BinnedCodes, BinningSpec, BinningStrategy, Pooling};
pub use error::{Error, Result};
pub use info::{Jemmig, MiMatrix};
pub use irs::{InterventionPlan, IrsResult};
pub use predictor::{FeatureScope, Hyperparameters, TrainConfig};
pub use probe::{ProbeConfig, ProbeResult};
pub use report::{run_eval, run_probe, MetricReport, ProbeReport, RunConfig};
pub use synth::{GeneratorSpec, OracleReport};
