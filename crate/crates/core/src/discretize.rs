//! Time-axis pooling and histogram binning of codes and continuous factors.
//!
//! Uniform-width bins are left-closed except the top bin, which also takes
//! the column maximum. Quantile bins are right-closed: a value equal to an
//! edge goes to the lower bin. Duplicate quantile edges are merged, so the
//! effective bin count can be smaller than requested.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{CodeTensor, Factor, FactorTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    #[serde(rename = "maxabs")]
    MaxAbs,
    Rms,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Mean => "mean",
            Pooling::MaxAbs => "maxabs",
            Pooling::Rms => "rms",
        }
    }

    fn apply(self, series: &[f32]) -> f64 {
        let n = series.len() as f64;
        match self {
            Pooling::Mean => series.iter().map(|&x| x as f64).sum::<f64>() / n,
            Pooling::MaxAbs => series.iter().fold(0.0f64, |m, &x| m.max((x as f64).abs())),
            Pooling::Rms => (series.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / n).sqrt(),
        }
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "maxabs" | "max-abs" => Ok(Pooling::MaxAbs),
            "rms" => Ok(Pooling::Rms),
            other => Err(Error::InvalidConfig(format!("unknown pooling `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinningStrategy {
    #[default]
    Uniform,
    Quantile,
}

impl BinningStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            BinningStrategy::Uniform => "uniform",
            BinningStrategy::Quantile => "quantile",
        }
    }
}

impl std::str::FromStr for BinningStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform-width" => Ok(BinningStrategy::Uniform),
            "quantile" => Ok(BinningStrategy::Quantile),
            other => Err(Error::InvalidConfig(format!("unknown binning `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub strategy: BinningStrategy,
    pub n_bins: u32,
}

impl BinningSpec {
    pub const DEFAULT_CODE_BINS: u32 = 20;
    pub const DEFAULT_FACTOR_BINS: u32 = 10;

    pub fn new(strategy: BinningStrategy, n_bins: u32) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::InvalidConfig(format!(
                "at least 2 bins required, got {n_bins}"
            )));
        }
        Ok(Self { strategy, n_bins })
    }

    pub fn uniform(n_bins: u32) -> Result<Self> {
        Self::new(BinningStrategy::Uniform, n_bins)
    }

    pub fn quantile(n_bins: u32) -> Result<Self> {
        Self::new(BinningStrategy::Quantile, n_bins)
    }

    pub fn default_codes() -> Self {
        Self {
            strategy: BinningStrategy::Uniform,
            n_bins: Self::DEFAULT_CODE_BINS,
        }
    }

    pub fn default_factors() -> Self {
        Self {
            strategy: BinningStrategy::Quantile,
            n_bins: Self::DEFAULT_FACTOR_BINS,
        }
    }
}

/// One binned column.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedColumn {
    pub bins: Vec<u32>,
    /// Interior thresholds, strictly increasing; `effective_bins - 1` of them.
    pub edges: Vec<f64>,
    pub effective_bins: u32,
}

/// Per-dimension bin indices of pooled codes.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCodes {
    n_samples: usize,
    columns: Vec<Vec<u32>>,
    edges: Vec<Vec<f64>>,
    effective_bins: Vec<u32>,
}

impl BinnedCodes {
    /// Assembles binned codes from per-dimension columns; every entry must be
    /// below its dimension's effective bin count.
    pub fn from_columns(columns: Vec<Vec<u32>>, effective_bins: Vec<u32>) -> Result<Self> {
        let edges = vec![Vec::new(); columns.len()];
        Self::from_parts(columns, edges, effective_bins)
    }

    fn from_parts(
        columns: Vec<Vec<u32>>,
        edges: Vec<Vec<f64>>,
        effective_bins: Vec<u32>,
    ) -> Result<Self> {
        if columns.len() != effective_bins.len() {
            return Err(Error::LengthMismatch {
                left: columns.len(),
                right: effective_bins.len(),
            });
        }
        let n_samples = columns.first().map_or(0, Vec::len);
        for (col, &bins) in columns.iter().zip(&effective_bins) {
            if col.len() != n_samples {
                return Err(Error::LengthMismatch {
                    left: col.len(),
                    right: n_samples,
                });
            }
            if let Some((position, &value)) = col.iter().enumerate().find(|(_, &b)| b >= bins) {
                return Err(Error::BinOutOfRange {
                    value,
                    bins,
                    position,
                });
            }
        }
        Ok(Self {
            n_samples,
            columns,
            edges,
            effective_bins,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_dims(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, dim: usize) -> &[u32] {
        &self.columns[dim]
    }

    pub fn get(&self, sample: usize, dim: usize) -> u32 {
        self.columns[dim][sample]
    }

    pub fn edges(&self, dim: usize) -> &[f64] {
        &self.edges[dim]
    }

    pub fn effective_bins(&self) -> &[u32] {
        &self.effective_bins
    }
}

/// Reduces every `(sample, dimension)` time series to a scalar.
pub fn pool_time_axis(codes: &CodeTensor, pooling: Pooling) -> Array2<f64> {
    let (n, d) = (codes.n_samples(), codes.n_dims());
    Array2::from_shape_fn((n, d), |(i, j)| pooling.apply(codes.series(i, j)))
}

/// Bins one real column.
pub fn bin_values(column: &[f64], spec: BinningSpec) -> Result<BinnedColumn> {
    if spec.n_bins < 2 {
        return Err(Error::InvalidConfig(format!(
            "at least 2 bins required, got {}",
            spec.n_bins
        )));
    }
    if column.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some((i, &v)) = column.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            value: v,
            location: format!("position {i}"),
        });
    }
    let (min, max) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if min == max {
        return Ok(BinnedColumn {
            bins: vec![0; column.len()],
            edges: Vec::new(),
            effective_bins: 1,
        });
    }
    let n = spec.n_bins as usize;
    match spec.strategy {
        BinningStrategy::Uniform => {
            let range = max - min;
            let mut edges: Vec<f64> = (1..n).map(|k| min + range * k as f64 / n as f64).collect();
            edges.dedup();
            let top = edges.len() as u32;
            let bins = column
                .iter()
                .map(|&v| (edges.partition_point(|&e| e <= v) as u32).min(top))
                .collect();
            Ok(BinnedColumn {
                bins,
                effective_bins: top + 1,
                edges,
            })
        }
        BinningStrategy::Quantile => {
            let mut sorted = column.to_vec();
            sorted.sort_by(f64::total_cmp);
            let last = sorted.len() - 1;
            let mut edges: Vec<f64> = (1..n)
                .map(|k| {
                    // Linear interpolation between order statistics at position (N-1)k/n.
                    let scaled = last * k;
                    let lo = scaled / n;
                    let frac = (scaled % n) as f64 / n as f64;
                    let hi = (lo + 1).min(last);
                    sorted[lo] + frac * (sorted[hi] - sorted[lo])
                })
                .filter(|&e| e < max)
                .collect();
            edges.dedup();
            let bins = column
                .iter()
                .map(|&v| edges.partition_point(|&e| e < v) as u32)
                .collect();
            Ok(BinnedColumn {
                bins,
                effective_bins: edges.len() as u32 + 1,
                edges,
            })
        }
    }
}

/// Bins each column of pooled codes independently.
pub fn bin_pooled(pooled: &Array2<f64>, spec: BinningSpec) -> Result<BinnedCodes> {
    let mut columns = Vec::with_capacity(pooled.ncols());
    let mut edges = Vec::with_capacity(pooled.ncols());
    let mut effective = Vec::with_capacity(pooled.ncols());
    for col in pooled.columns() {
        let col: Vec<f64> = col.to_vec();
        let binned = bin_values(&col, spec)?;
        columns.push(binned.bins);
        edges.push(binned.edges);
        effective.push(binned.effective_bins);
    }
    BinnedCodes::from_parts(columns, edges, effective)
}

/// Pools along time, then bins every dimension.
pub fn discretize_codes(codes: &CodeTensor, pooling: Pooling, spec: BinningSpec) -> Result<BinnedCodes> {
    bin_pooled(&pool_time_axis(codes, pooling), spec)
}

/// Bins a raw continuous factor; returns the codes and resulting cardinality.
pub fn discretize_continuous_factor(raw: &[f64], spec: BinningSpec) -> Result<(Vec<u32>, u32)> {
    let binned = bin_values(raw, spec)?;
    Ok((binned.bins, binned.effective_bins))
}

/// Replaces every continuous column of `table` by its binned version,
/// keeping the raw values as the column's continuous source.
pub fn discretize_factor_table(table: &FactorTable, spec: BinningSpec) -> Result<FactorTable> {
    let mut out = table.clone();
    for (k, f) in table.factors().iter().enumerate() {
        if !f.is_continuous() {
            continue;
        }
        let raw = f.continuous_source().unwrap_or_default().to_vec();
        let (codes, cardinality) = discretize_continuous_factor(&raw, spec)?;
        let replacement = Factor::categorical(f.name(), codes, cardinality)?.with_source(raw);
        out.replace_factor(k, replacement)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(n: usize, d: usize, t: usize, v: Vec<f32>) -> CodeTensor {
        CodeTensor::from_vec(n, d, t, v).unwrap()
    }

    #[test]
    fn pooling_examples() {
        let ct = tensor(1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pool_time_axis(&ct, Pooling::Mean)[[0, 0]], 2.5);
        let ct = tensor(1, 1, 2, vec![-3.0, 2.0]);
        assert_eq!(pool_time_axis(&ct, Pooling::MaxAbs)[[0, 0]], 3.0);
        let ct = tensor(1, 1, 2, vec![3.0, 4.0]);
        let rms = pool_time_axis(&ct, Pooling::Rms)[[0, 0]];
        assert!((rms - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((rms - 3.5355).abs() < 1e-4);
    }

    #[test]
    fn unit_sequence_pooling_is_identity_up_to_sign() {
        let ct = tensor(2, 1, 1, vec![-1.5, 2.0]);
        assert_eq!(pool_time_axis(&ct, Pooling::Mean).column(0).to_vec(), vec![-1.5, 2.0]);
        assert_eq!(pool_time_axis(&ct, Pooling::MaxAbs).column(0).to_vec(), vec![1.5, 2.0]);
        assert_eq!(pool_time_axis(&ct, Pooling::Rms).column(0).to_vec(), vec![1.5, 2.0]);
    }

    #[test]
    fn uniform_boundary_goes_up_and_max_goes_to_top() {
        let b = bin_values(&[0.0, 0.5, 1.0], BinningSpec::uniform(2).unwrap()).unwrap();
        assert_eq!(b.bins, vec![0, 1, 1]);
        assert_eq!(b.edges, vec![0.5]);
        assert_eq!(b.effective_bins, 2);
    }

    #[test]
    fn constant_column_collapses_to_one_bin() {
        for spec in [BinningSpec::uniform(4).unwrap(), BinningSpec::quantile(3).unwrap()] {
            let b = bin_values(&[5.0; 4], spec).unwrap();
            assert_eq!(b.bins, vec![0; 4]);
            assert_eq!(b.effective_bins, 1);
            assert!(b.edges.is_empty());
        }
    }

    #[test]
    fn quantile_median_split_is_right_closed() {
        let b = bin_values(&[1.0, 2.0, 3.0, 4.0, 100.0], BinningSpec::quantile(2).unwrap()).unwrap();
        assert_eq!(b.edges, vec![3.0]);
        assert_eq!(b.bins, vec![0, 0, 0, 1, 1]);
    }

    #[test]
    fn quantile_duplicate_edges_merge() {
        let b = bin_values(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0], BinningSpec::quantile(4).unwrap()).unwrap();
        assert_eq!(b.effective_bins, 2);
        assert_eq!(b.bins, vec![0, 0, 0, 0, 0, 1]);
        // Edges at the maximum would leave an empty top bin.
        let b = bin_values(&[0.0, 1.0, 1.0, 1.0], BinningSpec::quantile(2).unwrap()).unwrap();
        assert_eq!(b.effective_bins, 1);
    }

    #[test]
    fn invalid_inputs() {
        assert!(BinningSpec::uniform(1).is_err());
        assert!(bin_values(&[], BinningSpec::uniform(2).unwrap()).is_err());
        assert!(bin_values(&[f64::NAN], BinningSpec::uniform(2).unwrap()).is_err());
    }

    #[test]
    fn continuous_factor_examples() {
        let (codes, card) =
            discretize_continuous_factor(&[0.1, 0.2, 0.8, 0.9], BinningSpec::quantile(2).unwrap()).unwrap();
        assert_eq!(codes, vec![0, 0, 1, 1]);
        assert_eq!(card, 2);

        let (codes, card) =
            discretize_continuous_factor(&[0.3; 6], BinningSpec::quantile(10).unwrap()).unwrap();
        assert_eq!(card, 1);
        assert_eq!(codes, vec![0; 6]);

        let ten: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let (codes, card) = discretize_continuous_factor(&ten, BinningSpec::uniform(5).unwrap()).unwrap();
        assert_eq!(card, 5);
        let mut counts = [0; 5];
        codes.iter().for_each(|&c| counts[c as usize] += 1);
        assert_eq!(counts, [2; 5]);
    }

    #[test]
    fn factor_table_discretization_keeps_source() {
        let table = FactorTable::new(vec![
            Factor::from_codes("style", vec![0, 1, 2, 3]).unwrap(),
            Factor::continuous("rms", vec![0.1, 0.2, 0.8, 0.9]).unwrap(),
        ])
        .unwrap();
        let out = discretize_factor_table(&table, BinningSpec::quantile(2).unwrap()).unwrap();
        assert_eq!(out.column(1).unwrap(), &[0, 0, 1, 1]);
        assert_eq!(out.factor(1).cardinality(), Some(2));
        assert_eq!(out.factor(1).continuous_source().unwrap(), &[0.1, 0.2, 0.8, 0.9]);
        assert_eq!(out.factor(0), table.factor(0));
    }

    #[test]
    fn discretize_codes_small_case() {
        let ct = tensor(2, 1, 1, vec![0.0, 1.0]);
        let b = discretize_codes(&ct, Pooling::Mean, BinningSpec::uniform(2).unwrap()).unwrap();
        assert_eq!(b.column(0), &[0, 1]);
        assert_eq!(b.get(1, 0), 1);
    }

    #[test]
    fn binned_codes_reject_out_of_range() {
        assert!(BinnedCodes::from_columns(vec![vec![0, 2]], vec![2]).is_err());
        assert!(BinnedCodes::from_columns(vec![vec![0, 1]], vec![2]).is_ok());
    }

    fn partition_equal(a: &[u32], b: &[u32]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    proptest! {
        #[test]
        fn quantile_bins_invariant_under_increasing_transform(
            raw in prop::collection::vec(-50i32..50, 1..40),
            n_bins in 2u32..8,
        ) {
            let xs: Vec<f64> = raw.iter().map(|&v| v as f64 / 4.0).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| x.powi(3) + 2.0 * x + 7.0).collect();
            let spec = BinningSpec::quantile(n_bins).unwrap();
            let a = bin_values(&xs, spec).unwrap();
            let b = bin_values(&ys, spec).unwrap();
            prop_assert_eq!(a.bins, b.bins);
            prop_assert_eq!(a.effective_bins, b.effective_bins);
        }

        #[test]
        fn uniform_rebinning_of_dense_labels_preserves_partition(
            labels in prop::collection::vec(0u32..6, 1..60),
            extra in 0u32..5,
        ) {
            // Relabel densely so the observed cardinality is max + 1.
            let mut seen = std::collections::BTreeSet::new();
            labels.iter().for_each(|&l| { seen.insert(l); });
            let dense: Vec<u32> = labels.iter().map(|l| seen.range(..l).count() as u32).collect();
            let card = seen.len() as u32;
            let spec = BinningSpec::uniform(card.max(2) + extra).unwrap();
            let xs: Vec<f64> = dense.iter().map(|&v| v as f64).collect();
            let b = bin_values(&xs, spec).unwrap();
            prop_assert!(partition_equal(&b.bins, &dense));
        }

        #[test]
        fn bins_respect_effective_count_and_edges_increase(
            xs in prop::collection::vec(-1e3f64..1e3, 1..50),
            n_bins in 2u32..12,
            quantile in any::<bool>(),
        ) {
            let strategy = if quantile { BinningStrategy::Quantile } else { BinningStrategy::Uniform };
            let b = bin_values(&xs, BinningSpec::new(strategy, n_bins).unwrap()).unwrap();
            prop_assert!(b.bins.iter().all(|&v| v < b.effective_bins));
            prop_assert!(b.edges.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(b.edges.len() as u32 + 1, b.effective_bins);
        }

        #[test]
        fn mean_pooling_is_linear(
            vals in prop::collection::vec(-100i32..100, 6),
            c in -8i32..8,
        ) {
            let x: Vec<f32> = vals.iter().map(|&v| v as f32 / 8.0).collect();
            let cx: Vec<f32> = x.iter().map(|&v| v * c as f32).collect();
            let a = pool_time_axis(&tensor(2, 1, 3, x), Pooling::Mean);
            let b = pool_time_axis(&tensor(2, 1, 3, cx), Pooling::Mean);
            for i in 0..2 {
                prop_assert!((b[[i, 0]] - c as f64 * a[[i, 0]]).abs() < 1e-9);
            }
        }

        #[test]
        fn binning_is_pointwise_under_shuffle(
            xs in prop::collection::vec(-10.0f64..10.0, 2..30),
            rot in 0usize..30,
        ) {
            let spec = BinningSpec::uniform(5).unwrap();
            let r = rot % xs.len();
            let mut shuffled = xs.clone();
            shuffled.rotate_left(r);
            let a = bin_values(&xs, spec).unwrap();
            let b = bin_values(&shuffled, spec).unwrap();
            let mut rotated = a.bins.clone();
            rotated.rotate_left(r);
            prop_assert_eq!(rotated, b.bins);
        }
    }
}
