//! Run orchestration and report serialization.
//!
//! [`run_eval`] computes every metric family for the requested factors and
//! assembles one table per factor: a row per code dimension plus an `All`
//! row. JSON is the canonical form; markdown and CSV are views of it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    load_code_tensor, load_factor_table, load_manifest_dataset, manifest_path, validate_pairing, CodeTensor,
    DatasetManifest, FactorTable, IngestionConfig, PairedDataset, VersionTag,
};
use crate::discretize::{bin_pooled, discretize_factor_table, pool_time_axis, BinningSpec, Pooling};
use crate::error::{Error, Result};
use crate::info::{self, MiMatrix, ZERO_ENTROPY};
use crate::irs::{self, DEFAULT_MIN_GROUP_SIZE};
use crate::predictor::{
    explicitness_with_split, stratified_split, FeatureScope, Hyperparameters, SplitConfig, TrainConfig,
    DEFAULT_TEST_FRACTION,
};
use crate::probe::{probe_factor, ProbeConfig, ProbeResult, DEFAULT_RUNS};
use crate::seed;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const RUN_CONFIG_FILE: &str = "run_config.json";

pub const REASON_ZERO_ENTROPY: &str = "zero entropy";
pub const REASON_NO_NUISANCE: &str = "no nuisance variation";
pub const REASON_CLASS_MISSING: &str = "class missing from split";

/// Dataset locations exactly as given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub data: Option<String>,
    pub factors_csv: Option<String>,
    pub codes: Option<String>,
    pub schema: Option<String>,
}

/// Every setting that influenced a run, defaults included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub engine_version: String,
    pub command: String,
    pub inputs: Inputs,
    /// Evaluated factors, in table order.
    pub factors: Vec<String>,
    pub pooling: Pooling,
    pub code_binning: BinningSpec,
    pub factor_binning: BinningSpec,
    pub irs_min_group_size: usize,
    pub irs_scale: String,
    pub log_base: u32,
    pub hyperparameters: Hyperparameters,
    pub test_fraction: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        Self {
            engine_version: ENGINE_VERSION.to_string(),
            command: command.to_string(),
            inputs: Inputs::default(),
            factors: Vec::new(),
            pooling: Pooling::default(),
            code_binning: BinningSpec::default_codes(),
            factor_binning: BinningSpec::default_factors(),
            irs_min_group_size: DEFAULT_MIN_GROUP_SIZE,
            irs_scale: irs::SCALE_NAME.to_string(),
            log_base: 2,
            hyperparameters: Hyperparameters::default(),
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
            runs: (command == "probe").then_some(DEFAULT_RUNS),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::json("run configuration", e))
    }
}

/// A loaded factor table and code tensor with provenance hashes.
#[derive(Debug, Clone)]
pub struct LoadedInputs {
    pub manifest: Option<DatasetManifest>,
    /// SHA-256 of each input file, keyed by role.
    pub input_sha256: BTreeMap<String, String>,
    pub factors: FactorTable,
    pub codes: CodeTensor,
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut file, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(hasher.finalize()))
}

/// Reads either a manifest directory or an explicit factor CSV plus code tensor.
pub fn load_inputs(inputs: &Inputs) -> Result<LoadedInputs> {
    let mut hashes = BTreeMap::new();
    match (&inputs.data, &inputs.factors_csv, &inputs.codes) {
        (Some(data), None, None) => {
            let path = manifest_path(Path::new(data));
            hashes.insert("manifest".to_string(), sha256_file(&path)?);
            let (manifest, factors, codes) = load_manifest_dataset(&path)?;
            Ok(LoadedInputs {
                manifest: Some(manifest),
                input_sha256: hashes,
                factors,
                codes,
            })
        }
        (None, Some(factors_csv), Some(codes_path)) => {
            let schema = match &inputs.schema {
                Some(p) => {
                    hashes.insert("schema".to_string(), sha256_file(Path::new(p))?);
                    IngestionConfig::load(p)?
                }
                None => IngestionConfig::default(),
            };
            hashes.insert("factors".to_string(), sha256_file(Path::new(factors_csv))?);
            hashes.insert("codes".to_string(), sha256_file(Path::new(codes_path))?);
            Ok(LoadedInputs {
                manifest: None,
                input_sha256: hashes,
                factors: load_factor_table(factors_csv, &schema)?,
                codes: load_code_tensor(codes_path)?,
            })
        }
        _ => Err(Error::InvalidConfig(
            "give either a dataset directory or both a factor CSV and a code tensor".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    pub name: String,
    pub cardinality: u32,
    pub entropy_bits: f64,
    /// True when the column was continuous and binned for evaluation.
    pub discretized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: Option<String>,
    pub version_tag: Option<VersionTag>,
    pub input_sha256: BTreeMap<String, String>,
    pub n_samples: usize,
    pub n_dims: usize,
    pub seq_len: usize,
    pub factors: Vec<FactorSummary>,
}

/// Discretizes continuous factors, pairs the inputs and resolves the factor list.
fn prepare(config: &RunConfig, loaded: LoadedInputs) -> Result<(RunConfig, PairedDataset, DatasetSummary, Vec<usize>)> {
    let LoadedInputs {
        manifest,
        input_sha256,
        factors,
        codes,
    } = loaded;
    let continuous: Vec<bool> = factors.factors().iter().map(|f| f.is_continuous()).collect();
    let factors = discretize_factor_table(&factors, config.factor_binning)?;
    let data = validate_pairing(factors, codes)?;

    let table = data.factors();
    let indices: Vec<usize> = if config.factors.is_empty() {
        (0..table.n_factors()).collect()
    } else {
        let mut idx = config
            .factors
            .iter()
            .map(|name| table.index_of(name))
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        idx.dedup();
        idx
    };
    let mut resolved = config.clone();
    resolved.factors = indices.iter().map(|&k| table.factor(k).name().to_string()).collect();

    let summaries = table
        .factors()
        .iter()
        .zip(&continuous)
        .map(|(f, &disc)| {
            let card = f.cardinality().unwrap_or(1);
            Ok(FactorSummary {
                name: f.name().to_string(),
                cardinality: card,
                entropy_bits: info::entropy(f.codes()?, card)?,
                discretized: disc,
            })
        })
        .collect::<Result<_>>()?;
    let summary = DatasetSummary {
        name: manifest.as_ref().map(|m| m.name.clone()),
        version_tag: manifest.as_ref().map(|m| m.version_tag),
        input_sha256,
        n_samples: data.n_samples(),
        n_dims: data.codes().n_dims(),
        seq_len: data.codes().seq_len(),
        factors: summaries,
    };
    Ok((resolved, data, summary, indices))
}

/// A metric value, or null with the reason it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Cell {
    pub fn value(v: f64) -> Self {
        Self {
            value: Some(v),
            reason: None,
        }
    }

    pub fn null(reason: &str) -> Self {
        Self {
            value: None,
            reason: Some(reason.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// Dimension index, or `"All"`.
    pub dimension: String,
    /// `I(v; z_j) / H(v)` per dimension; MIG in the `All` row.
    pub mig: Cell,
    /// Normalized JEMMIG (higher is better).
    pub jemmig: Cell,
    /// Raw JEMMIG in bits (lower is better).
    pub jemmig_raw: Cell,
    pub irs: Cell,
    pub irs_raw: Cell,
    pub explicitness: Cell,
}

/// Metric columns of a factor table, in display order.
pub const COLUMNS: [&str; 6] = ["mig", "jemmig", "jemmig_raw", "irs", "irs_raw", "explicitness"];

impl ReportRow {
    pub fn cell(&self, column: &str) -> Option<&Cell> {
        Some(match column {
            "mig" => &self.mig,
            "jemmig" => &self.jemmig,
            "jemmig_raw" => &self.jemmig_raw,
            "irs" => &self.irs,
            "irs_raw" => &self.irs_raw,
            "explicitness" => &self.explicitness,
            _ => return None,
        })
    }
}

/// Row index of the best value per metric column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BestCells {
    pub mig: Option<usize>,
    pub jemmig: Option<usize>,
    pub jemmig_raw: Option<usize>,
    pub irs: Option<usize>,
    pub explicitness: Option<usize>,
}

impl BestCells {
    pub fn get(&self, column: &str) -> Option<usize> {
        match column {
            "mig" => self.mig,
            "jemmig" => self.jemmig,
            "jemmig_raw" => self.jemmig_raw,
            "irs" => self.irs,
            "explicitness" => self.explicitness,
            _ => None,
        }
    }
}

/// First row holding the best value; `lower` selects the minimum.
fn best_row(rows: &[ReportRow], column: &str, lower: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Some(v) = row.cell(column).and_then(|c| c.value) {
            let better = match best {
                None => true,
                Some((_, b)) if lower => v < b,
                Some((_, b)) => v > b,
            };
            if better {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrsCoverage {
    pub usable_cells: usize,
    pub skipped_cells: usize,
    pub min_group_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorReport {
    pub factor: String,
    pub cardinality: u32,
    pub entropy_bits: f64,
    /// `d` dimension rows followed by `All`.
    pub rows: Vec<ReportRow>,
    pub best: BestCells,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irs_coverage: Option<IrsCoverage>,
}

/// Dataset-level means over factors with defined `All` values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mig: Option<f64>,
    pub jemmig: Option<f64>,
    pub irs: Option<f64>,
    pub explicitness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub format_version: u32,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    pub effective_code_bins: Vec<u32>,
    /// Full factor × dimension mutual-information matrix in bits.
    pub mutual_information: MiMatrix,
    pub summary: Summary,
    pub factors: Vec<FactorReport>,
}

fn cells_from(values: Vec<Result<f64>>, null_reason: Option<&str>) -> Result<Vec<Cell>> {
    values
        .into_iter()
        .map(|v| match null_reason {
            Some(r) => Ok(Cell::null(r)),
            None => v.map(Cell::value),
        })
        .collect()
}

/// Explicitness of every scope of every factor, with one split per factor.
fn explicitness_cells(
    config: &RunConfig,
    data: &PairedDataset,
    factors: &[usize],
) -> Result<BTreeMap<usize, Vec<Cell>>> {
    let d = data.codes().n_dims();
    let scopes = FeatureScope::all_scopes(d);
    let mut splits = BTreeMap::new();
    let mut out = BTreeMap::new();
    for &k in factors {
        let f = data.factors().factor(k);
        if info::entropy(f.codes()?, f.cardinality().unwrap_or(1))? <= ZERO_ENTROPY {
            continue;
        }
        let split = stratified_split(
            f.codes()?,
            SplitConfig {
                test_fraction: config.test_fraction,
                seed: seed::derive(config.seed, &[seed::STREAM_SPLIT, k as u64]),
            },
        );
        match split {
            Ok(s) => {
                splits.insert(k, s);
            }
            Err(Error::ClassMissingFromSplit { .. }) => {
                out.insert(k, vec![Cell::null(REASON_CLASS_MISSING); d + 1]);
            }
            Err(e) => return Err(e.in_metric("explicitness", f.name())),
        }
    }
    let tasks: Vec<(usize, FeatureScope)> = splits
        .keys()
        .flat_map(|&k| scopes.iter().map(move |&s| (k, s)))
        .collect();
    let scores: Vec<f64> = tasks
        .par_iter()
        .map(|&(k, scope)| {
            let train = TrainConfig::new(
                config.hyperparameters,
                seed::derive(config.seed, &[seed::STREAM_EXPLICITNESS_INIT, k as u64, scope.index(d)]),
            );
            explicitness_with_split(data, k, scope, &splits[&k], &train)
                .map(|r| r.score)
                .map_err(|e| e.in_metric("explicitness", data.factors().factor(k).name()))
        })
        .collect::<Result<_>>()?;
    for ((k, _), score) in tasks.iter().zip(scores) {
        out.entry(*k).or_insert_with(Vec::new).push(Cell::value(score));
    }
    Ok(out)
}

/// Computes every metric family for the configured factors.
pub fn run_eval(config: &RunConfig, loaded: LoadedInputs) -> Result<MetricReport> {
    if config.irs_min_group_size == 0 {
        return Err(Error::InvalidConfig("IRS minimum group size must be at least 1".into()));
    }
    config.hyperparameters.validate()?;
    let (config, data, dataset, factor_indices) = prepare(config, loaded)?;
    let d = data.codes().n_dims();
    if d < 2 {
        return Err(Error::TooFewDimensions { required: 2, found: d });
    }

    let pooled = pool_time_axis(data.codes(), config.pooling);
    let binned = bin_pooled(&pooled, config.code_binning)?;
    let mi = info::mi_matrix(&data, &binned)?;
    let mut explicit = explicitness_cells(&config, &data, &factor_indices)?;
    let all_dims: Vec<usize> = (0..d).collect();

    let mut reports = Vec::with_capacity(factor_indices.len());
    for &k in &factor_indices {
        let f = data.factors().factor(k);
        let name = f.name();
        let h = mi.factor_entropies[k];
        let labels: Vec<String> = FeatureScope::all_scopes(d).iter().map(FeatureScope::label).collect();

        let mut irs_coverage = None;
        let rows: Vec<ReportRow> = if h <= ZERO_ENTROPY {
            labels
                .into_iter()
                .map(|dimension| ReportRow {
                    dimension,
                    mig: Cell::null(REASON_ZERO_ENTROPY),
                    jemmig: Cell::null(REASON_ZERO_ENTROPY),
                    jemmig_raw: Cell::null(REASON_ZERO_ENTROPY),
                    irs: Cell::null(REASON_ZERO_ENTROPY),
                    irs_raw: Cell::null(REASON_ZERO_ENTROPY),
                    explicitness: Cell::null(REASON_ZERO_ENTROPY),
                })
                .collect()
        } else {
            let info_err = |e: Error| e.in_metric("information metrics", name);
            let mut mig: Vec<f64> = mi.row(k).iter().map(|i| (i / h).clamp(0.0, 1.0)).collect();
            mig.push(info::mig(&mi, k).map_err(info_err)?);
            let mut jem = (0..d)
                .map(|j| info::jemmig_at(&data, &binned, &mi, k, j))
                .collect::<Result<Vec<_>>>()
                .map_err(info_err)?;
            jem.push(info::jemmig(&data, &binned, &mi, k).map_err(info_err)?);

            let (irs_values, irs_null) = match irs::build_plan(&data, k, config.irs_min_group_size) {
                Ok(plan) => {
                    irs_coverage = Some(IrsCoverage {
                        usable_cells: plan.usable_cells(),
                        skipped_cells: plan.skipped_cells,
                        min_group_size: plan.min_group_size,
                    });
                    let mut v: Vec<Result<irs::IrsResult>> =
                        (0..d).map(|j| irs::irs_with_plan(&plan, &pooled, &[j])).collect();
                    v.push(irs::irs_with_plan(&plan, &pooled, &all_dims));
                    (v, None)
                }
                Err(Error::NoNuisanceVariation(_)) => (Vec::new(), Some(REASON_NO_NUISANCE)),
                Err(e) => return Err(e.in_metric("IRS", name)),
            };
            let irs_err = |e: Error| e.in_metric("IRS", name);
            let (irs_score, irs_raw) = match irs_null {
                Some(r) => (vec![Cell::null(r); d + 1], vec![Cell::null(r); d + 1]),
                None => {
                    let results = irs_values.into_iter().collect::<Result<Vec<_>>>().map_err(irs_err)?;
                    (
                        results.iter().map(|r| Cell::value(r.score)).collect(),
                        results.iter().map(|r| Cell::value(r.raw)).collect(),
                    )
                }
            };
            let explicitness = explicit.remove(&k).expect("explicitness computed for every informative factor");

            let mig = cells_from(mig.into_iter().map(Ok).collect(), None)?;
            labels
                .into_iter()
                .enumerate()
                .map(|(i, dimension)| ReportRow {
                    dimension,
                    mig: mig[i].clone(),
                    jemmig: Cell::value(jem[i].normalized),
                    jemmig_raw: Cell::value(jem[i].raw),
                    irs: irs_score[i].clone(),
                    irs_raw: irs_raw[i].clone(),
                    explicitness: explicitness[i].clone(),
                })
                .collect()
        };
        let best = BestCells {
            mig: best_row(&rows, "mig", false),
            jemmig: best_row(&rows, "jemmig", false),
            jemmig_raw: best_row(&rows, "jemmig_raw", true),
            irs: best_row(&rows, "irs", false),
            explicitness: best_row(&rows, "explicitness", false),
        };
        reports.push(FactorReport {
            factor: name.to_string(),
            cardinality: f.cardinality().unwrap_or(1),
            entropy_bits: h,
            rows,
            best,
            irs_coverage,
        });
    }

    let mean_all = |column: &str| {
        let vals: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.rows.last().and_then(|row| row.cell(column)).and_then(|c| c.value))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let summary = Summary {
        mig: mean_all("mig"),
        jemmig: mean_all("jemmig"),
        irs: mean_all("irs"),
        explicitness: mean_all("explicitness"),
    };
    Ok(MetricReport {
        format_version: REPORT_FORMAT_VERSION,
        config,
        dataset,
        effective_code_bins: binned.effective_bins().to_vec(),
        mutual_information: mi,
        summary,
        factors: reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub format_version: u32,
    pub config: RunConfig,
    pub dataset: DatasetSummary,
    pub results: Vec<ProbeResult>,
}

/// Linear probes for the configured factors.
pub fn run_probe(config: &RunConfig, loaded: LoadedInputs) -> Result<ProbeReport> {
    let (mut config, data, dataset, factor_indices) = prepare(config, loaded)?;
    let runs = *config.runs.get_or_insert(DEFAULT_RUNS);
    let probe_config = ProbeConfig {
        hyper: config.hyperparameters,
        test_fraction: config.test_fraction,
        seed: config.seed,
        runs,
    };
    let results = factor_indices
        .iter()
        .map(|&k| {
            probe_factor(&data, k, &probe_config)
                .map_err(|e| e.in_metric("linear probe", data.factors().factor(k).name()))
        })
        .collect::<Result<_>>()?;
    Ok(ProbeReport {
        format_version: REPORT_FORMAT_VERSION,
        config,
        dataset,
        results,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::json("report", e))
}

pub fn read_metric_report(path: impl AsRef<Path>) -> Result<MetricReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Six decimals with ties rounded to even.
pub fn format_value(v: f64) -> String {
    // `{:.6}` rounds the exact binary value, so it only disagrees with
    // half-even on exact decimal ties, which are resolved here.
    let plain = format!("{v:.6}");
    let scaled = v * 1e6;
    if scaled.fract().abs() == 0.5 {
        let down = scaled.trunc();
        let even = if down % 2.0 == 0.0 { down } else { down + scaled.signum() };
        let s = format!("{:.6}", even / 1e6);
        return if s == "-0.000000" { "0.000000".into() } else { s };
    }
    if plain == "-0.000000" {
        "0.000000".into()
    } else {
        plain
    }
}

const NULL_MARK: &str = "\u{2014}";

fn display_cell(cell: &Cell, best: bool) -> String {
    match cell.value {
        Some(v) if best => format!("**{}**", format_value(v)),
        Some(v) => format_value(v),
        None => NULL_MARK.to_string(),
    }
}

fn display_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NULL_MARK.to_string(), format_value)
}

/// Markdown view: one table per factor with the best cell of each column in bold.
pub fn render_markdown(report: &MetricReport) -> Result<String> {
    let mut md = String::new();
    let ds = &report.dataset;
    md.push_str("# Disentanglement report\n\n");
    if let Some(name) = &ds.name {
        let tag = ds.version_tag.map(|t| format!(" ({})", t.as_str())).unwrap_or_default();
        let _ = writeln!(md, "Dataset: `{name}`{tag}\n");
    }
    let _ = writeln!(
        md,
        "Samples: {}, code dimensions: {}, sequence length: {}\n",
        ds.n_samples, ds.n_dims, ds.seq_len
    );
    for (role, hash) in &ds.input_sha256 {
        let _ = writeln!(md, "- {role} SHA-256: `{hash}`");
    }
    md.push_str("\n## Summary\n\n| Metric | Mean over factors |\n|---|---|\n");
    let s = &report.summary;
    for (label, v) in [
        ("MIG", s.mig),
        ("JEMMIG (normalized)", s.jemmig),
        ("IRS", s.irs),
        ("Explicitness", s.explicitness),
    ] {
        let _ = writeln!(md, "| {label} | {} |", display_opt(v));
    }

    for f in &report.factors {
        let _ = write!(
            md,
            "\n## Factor `{}`\n\n{} classes, H = {} bits\n\n",
            f.factor,
            f.cardinality,
            format_value(f.entropy_bits)
        );
        md.push_str(
            "| Dimension | MIG \u{2191} | JEMMIG \u{2191} | JEMMIG raw \u{2193} | IRS \u{2191} | IRS raw | Explicitness \u{2191} |\n",
        );
        md.push_str("|---|---|---|---|---|---|---|\n");
        for (i, row) in f.rows.iter().enumerate() {
            let cells: Vec<String> = COLUMNS
                .iter()
                .map(|&c| display_cell(row.cell(c).expect("known column"), f.best.get(c) == Some(i)))
                .collect();
            let _ = writeln!(md, "| {} | {} |", row.dimension, cells.join(" | "));
        }
        if let Some(cov) = &f.irs_coverage {
            let _ = writeln!(
                md,
                "\nIRS coverage: {} usable cells, {} skipped (minimum group size {}).",
                cov.usable_cells, cov.skipped_cells, cov.min_group_size
            );
        }
        let reasons: std::collections::BTreeSet<&str> = f
            .rows
            .iter()
            .flat_map(|r| COLUMNS.iter().filter_map(move |&c| r.cell(c).and_then(|c| c.reason.as_deref())))
            .collect();
        for r in reasons {
            let _ = writeln!(md, "\nUndefined cells: {r}.");
        }
    }
    let _ = write!(md, "\n## Run configuration\n\n```json\n{}```\n", report.config.to_json()?);
    Ok(md)
}

fn csv_field(cell: &Cell) -> String {
    cell.value.map(|v| v.to_string()).unwrap_or_default()
}

/// Factor name reduced to characters safe in a file name.
pub fn file_stem(factor: &str) -> String {
    factor
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// File name used for a factor's CSV table.
pub fn factor_csv_name(factor: &str) -> String {
    format!("{}.csv", file_stem(factor))
}

/// CSV view of one factor table; empty fields are null cells.
pub fn factor_csv(f: &FactorReport) -> String {
    let mut out = format!("dimension,{}\n", COLUMNS.join(","));
    for row in &f.rows {
        let fields: Vec<String> = COLUMNS
            .iter()
            .map(|&c| csv_field(row.cell(c).expect("known column")))
            .collect();
        let _ = writeln!(out, "{},{}", row.dimension, fields.join(","));
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes one CSV per factor plus the run configuration into `dir`.
pub fn write_csv_tables(report: &MetricReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in &report.factors {
        let path = dir.join(factor_csv_name(&f.factor));
        write_file(&path, &factor_csv(f))?;
        written.push(path);
    }
    let config = dir.join(RUN_CONFIG_FILE);
    write_file(&config, &report.config.to_json()?)?;
    written.push(config);
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidConfig(format!("unknown report format `{other}`"))),
        }
    }
}

/// Writes `report` in `format`. CSV output treats `path` as a directory.
pub fn render_report(report: &MetricReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => write_file(path, &to_json(report)?).map(|_| vec![path.to_path_buf()]),
        ReportFormat::Markdown => write_file(path, &render_markdown(report)?).map(|_| vec![path.to_path_buf()]),
        ReportFormat::Csv => write_csv_tables(report, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Factor, GridFactor};
    use crate::synth::{generate, GeneratorSpec};

    fn quick_config() -> RunConfig {
        let mut c = RunConfig::new("eval");
        c.hyperparameters.epochs = 5;
        c.seed = 3;
        c
    }

    fn loaded(factors: FactorTable, codes: CodeTensor) -> LoadedInputs {
        LoadedInputs {
            manifest: None,
            input_sha256: BTreeMap::new(),
            factors,
            codes,
        }
    }

    fn identity_inputs(n: usize) -> LoadedInputs {
        let grid = vec![GridFactor::new("a", 4), GridFactor::new("b", 3), GridFactor::new("c", 5)];
        let mut spec = GeneratorSpec::identity(grid, 6, 2, n, 1);
        // Permute so generating dimensions are not simply 0, 1, 2.
        spec.dims.swap(0, 5);
        spec.dims.swap(1, 3);
        let (t, c, _) = generate(&spec).unwrap();
        loaded(t, c)
    }

    #[test]
    fn identity_report_layout_and_argmax() {
        let report = run_eval(&quick_config(), identity_inputs(600)).unwrap();
        assert_eq!(report.config.factors, vec!["a", "b", "c"]);
        let expected_dim = [5, 3, 2];
        for (f, &dim) in report.factors.iter().zip(&expected_dim) {
            assert_eq!(f.rows.len(), 7);
            assert_eq!(f.rows[6].dimension, "All");
            assert_eq!(f.best.mig, Some(dim), "{}", f.factor);
            for row in &f.rows {
                for c in COLUMNS {
                    let cell = row.cell(c).unwrap();
                    if let Some(v) = cell.value {
                        assert!(v.is_finite());
                        if c != "jemmig_raw" && c != "irs_raw" {
                            assert!((0.0..=1.0).contains(&v), "{c} = {v}");
                        }
                    } else {
                        assert!(cell.reason.is_some());
                    }
                }
            }
        }
        assert!(report.summary.mig.unwrap() > 0.9);
    }

    #[test]
    fn zero_entropy_factor_is_null() {
        let inputs = identity_inputs(120);
        let mut factors: Vec<Factor> = inputs.factors.factors().to_vec();
        factors.push(Factor::categorical("constant", vec![0; 120], 1).unwrap());
        let table = FactorTable::new(factors).unwrap();
        let report = run_eval(&quick_config(), loaded(table, inputs.codes)).unwrap();
        let constant = report.factors.last().unwrap();
        assert_eq!(constant.rows.len(), 7);
        for row in &constant.rows {
            for c in COLUMNS {
                assert_eq!(row.cell(c).unwrap(), &Cell::null(REASON_ZERO_ENTROPY));
            }
        }
        assert_eq!(constant.best, BestCells::default());
        let md = render_markdown(&report).unwrap();
        assert!(md.contains("| All | \u{2014} | \u{2014} |"));
        let json = to_json(&report).unwrap();
        assert!(json.contains("\"value\": null"));
    }

    #[test]
    fn unknown_factor_is_rejected() {
        let mut c = quick_config();
        c.factors = vec!["nope".into()];
        assert!(matches!(run_eval(&c, identity_inputs(60)), Err(Error::UnknownFactor(_))));
    }

    #[test]
    fn best_markers_unique_with_lowest_index_ties() {
        let row = |v: Option<f64>| ReportRow {
            dimension: "x".into(),
            mig: v.map_or(Cell::null("r"), Cell::value),
            jemmig: Cell::value(0.0),
            jemmig_raw: Cell::value(1.0),
            irs: Cell::null("r"),
            irs_raw: Cell::null("r"),
            explicitness: Cell::value(0.5),
        };
        let rows = vec![row(Some(0.2)), row(None), row(Some(0.7)), row(Some(0.7))];
        assert_eq!(best_row(&rows, "mig", false), Some(2));
        assert_eq!(best_row(&rows, "jemmig_raw", true), Some(0));
        assert_eq!(best_row(&rows, "irs", false), None);
    }

    #[test]
    fn half_even_display() {
        assert_eq!(format_value(0.0078125), "0.007812");
        assert_eq!(format_value(0.0234375), "0.023438");
        assert_eq!(format_value(0.5158), "0.515800");
        assert_eq!(format_value(1.0 / 3.0), "0.333333");
        assert_eq!(format_value(-1e-9), "0.000000");
    }

    #[test]
    fn markdown_matches_json_to_display_precision() {
        let report = run_eval(&quick_config(), identity_inputs(300)).unwrap();
        let json = to_json(&report).unwrap();
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let md = render_markdown(&back).unwrap();
        for f in &back.factors {
            for row in &f.rows {
                let line = md
                    .lines()
                    .skip_while(|l| !l.contains(&format!("`{}`", f.factor)))
                    .find(|l| l.starts_with(&format!("| {} |", row.dimension)))
                    .unwrap();
                for c in COLUMNS {
                    if let Some(v) = row.cell(c).unwrap().value {
                        assert!(line.contains(&format_value(v)), "{line} lacks {c}");
                    }
                }
            }
            // Exactly one bold cell per defined column.
            let table: Vec<&str> = md
                .lines()
                .skip_while(|l| !l.contains(&format!("`{}`", f.factor)))
                .filter(|l| l.starts_with("| ") && !l.starts_with("| Dimension"))
                .take(f.rows.len())
                .collect();
            let bold = table.iter().map(|l| l.matches("**").count() / 2).sum::<usize>();
            let defined = ["mig", "jemmig", "jemmig_raw", "irs", "explicitness"]
                .iter()
                .filter(|c| f.best.get(c).is_some())
                .count();
            assert_eq!(bold, defined);
        }
        assert!(md.contains("\"command\": \"eval\""));
    }

    #[test]
    fn csv_tables_and_config_sidecar() {
        let report = run_eval(&quick_config(), identity_inputs(120)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = render_report(&report, ReportFormat::Csv, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let text = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(text.starts_with("dimension,mig,jemmig,jemmig_raw,irs,irs_raw,explicitness\n"));
        let config: RunConfig =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(RUN_CONFIG_FILE)).unwrap()).unwrap();
        assert_eq!(config, report.config);
    }

    #[test]
    fn eval_is_deterministic() {
        let a = to_json(&run_eval(&quick_config(), identity_inputs(200)).unwrap()).unwrap();
        let b = to_json(&run_eval(&quick_config(), identity_inputs(200)).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probe_report_resolves_runs() {
        let mut c = RunConfig::new("probe");
        c.hyperparameters.epochs = 3;
        c.factors = vec!["b".into()];
        c.runs = Some(2);
        let r = run_probe(&c, identity_inputs(200)).unwrap();
        assert_eq!(r.results.len(), 1);
        assert_eq!(r.results[0].runs, 2);
        assert_eq!(r.results[0].best_dimension(), 3);
    }
}
