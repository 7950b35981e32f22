//! Linear probing: per-dimension and whole-code classifiers over several
//! runs, summarized as accuracy trends.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::error::{Error, Result};
use crate::predictor::{
    stratified_split, train_on, CodeFeatures, FeatureScope, Hyperparameters, Split, SplitConfig, TrainConfig,
    DEFAULT_TEST_FRACTION,
};
use crate::seed;

pub const DEFAULT_RUNS: usize = 5;
pub const TREND_HEADER: &str = "dimension,mean_accuracy,std_accuracy";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub hyper: Hyperparameters,
    pub test_fraction: f64,
    pub seed: u64,
    pub runs: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::default(),
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
            runs: DEFAULT_RUNS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    /// Dimension index, or `"All"`.
    pub dimension: String,
    pub mean_accuracy: f64,
    /// Population standard deviation over runs.
    pub std_accuracy: f64,
    pub run_accuracies: Vec<f64>,
}

impl ProbeRow {
    fn from_runs(scope: FeatureScope, run_accuracies: Vec<f64>) -> Self {
        let n = run_accuracies.len() as f64;
        let mean = run_accuracies.iter().sum::<f64>() / n;
        let var = run_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            dimension: scope.label(),
            mean_accuracy: mean,
            std_accuracy: var.sqrt(),
            run_accuracies,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub factor: String,
    pub n_classes: u32,
    pub per_dim: Vec<ProbeRow>,
    pub all_combined: ProbeRow,
    pub runs: usize,
    /// Share of the most frequent class over the whole dataset.
    pub majority_baseline: f64,
    pub config: ProbeConfig,
}

impl ProbeResult {
    /// Dimension with the highest mean accuracy; ties go to the lowest index.
    pub fn best_dimension(&self) -> usize {
        let mut best = 0;
        for (j, row) in self.per_dim.iter().enumerate() {
            if row.mean_accuracy > self.per_dim[best].mean_accuracy {
                best = j;
            }
        }
        best
    }

    /// Per-dimension rows followed by the `All` row.
    pub fn rows(&self) -> impl Iterator<Item = &ProbeRow> {
        self.per_dim.iter().chain(std::iter::once(&self.all_combined))
    }
}

pub fn probe_split_seed(master: u64, factor: usize, run: usize) -> u64 {
    seed::derive(master, &[seed::STREAM_PROBE_SPLIT, factor as u64, run as u64])
}

pub fn probe_init_seed(master: u64, factor: usize, run: usize, scope_index: u64) -> u64 {
    seed::derive(master, &[seed::STREAM_PROBE_INIT, factor as u64, run as u64, scope_index])
}

/// Probes `factor` from every single dimension and from all dimensions at
/// once. All scopes in a run share that run's split.
pub fn probe_factor(data: &PairedDataset, factor: usize, config: &ProbeConfig) -> Result<ProbeResult> {
    if config.runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    config.hyper.validate()?;
    let f = data.factors().factor(factor);
    let labels = f.codes()?;
    let n_classes = f.cardinality().unwrap_or(1);
    let mut counts = vec![0usize; n_classes as usize];
    labels.iter().for_each(|&l| counts[l as usize] += 1);
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }

    let splits: Vec<Split> = (0..config.runs)
        .map(|run| {
            stratified_split(
                labels,
                SplitConfig {
                    test_fraction: config.test_fraction,
                    seed: probe_split_seed(config.seed, factor, run),
                },
            )
        })
        .collect::<Result<_>>()?;

    let d = data.codes().n_dims();
    let scopes = FeatureScope::all_scopes(d);
    let tasks: Vec<(usize, FeatureScope)> = scopes
        .iter()
        .flat_map(|&s| (0..config.runs).map(move |r| (r, s)))
        .collect();
    let accuracies: Vec<f64> = tasks
        .par_iter()
        .map(|&(run, scope)| {
            let features = CodeFeatures::new(data.codes(), scope)?;
            let train = TrainConfig::new(config.hyper, probe_init_seed(config.seed, factor, run, scope.index(d)));
            let clf = train_on(&features, &splits[run].train, labels, n_classes as usize, &train)?;
            Ok(clf.accuracy(&features, &splits[run].test, labels))
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<ProbeRow> = accuracies
        .chunks(config.runs)
        .zip(&scopes)
        .map(|(acc, &scope)| ProbeRow::from_runs(scope, acc.to_vec()))
        .collect();
    let all_combined = rows.pop().expect("All row present");
    Ok(ProbeResult {
        factor: f.name().to_string(),
        n_classes,
        per_dim: rows,
        all_combined,
        runs: config.runs,
        majority_baseline: *counts.iter().max().unwrap() as f64 / labels.len() as f64,
        config: *config,
    })
}

/// Trend rows as CSV text: one line per dimension, then `All`.
pub fn accuracy_trend_csv(result: &ProbeResult) -> String {
    let mut out = String::from(TREND_HEADER);
    out.push('\n');
    for row in result.rows() {
        out.push_str(&format!("{},{},{}\n", row.dimension, row.mean_accuracy, row.std_accuracy));
    }
    out
}

pub fn emit_accuracy_trend(result: &ProbeResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(accuracy_trend_csv(result).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TrendRow {
    pub dimension: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

pub fn read_accuracy_trend(path: impl AsRef<Path>) -> Result<Vec<TrendRow>> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header.join(",") != TREND_HEADER {
        return Err(Error::InvalidDataset(format!(
            "{}: unexpected trend header `{}`",
            path.display(),
            header.join(",")
        )));
    }
    reader.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_err)
}
