//! Predictor-based metrics: a softmax logistic-regression trainer,
//! rank-based AUC-ROC and the normalized explicitness score.

use std::collections::BTreeMap;

use ndarray::{linalg::general_mat_mul, s, Array1, Array2, Zip};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{CodeTensor, PairedDataset};
use crate::error::{Error, Result};
use crate::seed;

/// Optimizer settings shared by explicitness and probing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 0.05,
            l2: 1e-4,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::InvalidConfig("L2 strength must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub hyper: Hyperparameters,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(hyper: Hyperparameters, seed: u64) -> Self {
        Self { hyper, seed }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(Hyperparameters::default(), 0)
    }
}

/// Row-addressable feature matrix.
pub trait Features: Sync {
    fn n_samples(&self) -> usize;
    fn n_features(&self) -> usize;
    fn write_row(&self, sample: usize, out: &mut [f32]);
}

/// Dense in-memory features.
pub struct DenseFeatures<'a>(pub &'a Array2<f64>);

impl Features for DenseFeatures<'_> {
    fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    fn n_features(&self) -> usize {
        self.0.ncols()
    }

    fn write_row(&self, sample: usize, out: &mut [f32]) {
        for (o, &v) in out.iter_mut().zip(self.0.row(sample)) {
            *o = v as f32;
        }
    }
}

/// Which code dimensions feed a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureScope {
    /// The time series of one dimension (`T` features).
    Dim(usize),
    /// All dimensions concatenated (`d·T` features).
    All,
}

impl FeatureScope {
    pub fn label(&self) -> String {
        match self {
            FeatureScope::Dim(j) => j.to_string(),
            FeatureScope::All => "All".to_string(),
        }
    }

    /// Counter used in seed paths: the dimension index, or `d` for `All`.
    pub fn index(&self, n_dims: usize) -> u64 {
        match self {
            FeatureScope::Dim(j) => *j as u64,
            FeatureScope::All => n_dims as u64,
        }
    }

    /// Every single-dimension scope followed by `All`.
    pub fn all_scopes(n_dims: usize) -> Vec<FeatureScope> {
        (0..n_dims).map(FeatureScope::Dim).chain([FeatureScope::All]).collect()
    }
}

/// Code-tensor features restricted to a scope, read without copying the tensor.
pub struct CodeFeatures<'a> {
    codes: &'a CodeTensor,
    scope: FeatureScope,
}

impl<'a> CodeFeatures<'a> {
    pub fn new(codes: &'a CodeTensor, scope: FeatureScope) -> Result<Self> {
        if let FeatureScope::Dim(j) = scope {
            if j >= codes.n_dims() {
                return Err(Error::InvalidConfig(format!(
                    "dimension {j} out of range for {} dimensions",
                    codes.n_dims()
                )));
            }
        }
        Ok(Self { codes, scope })
    }
}

impl Features for CodeFeatures<'_> {
    fn n_samples(&self) -> usize {
        self.codes.n_samples()
    }

    fn n_features(&self) -> usize {
        match self.scope {
            FeatureScope::Dim(_) => self.codes.seq_len(),
            FeatureScope::All => self.codes.n_dims() * self.codes.seq_len(),
        }
    }

    fn write_row(&self, sample: usize, out: &mut [f32]) {
        let src = match self.scope {
            FeatureScope::Dim(j) => self.codes.series(sample, j),
            FeatureScope::All => self.codes.sample(sample),
        };
        out.copy_from_slice(src);
    }
}

/// Per-feature standardization fitted on training rows. Constant features map to zero.
#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Vec<f32>,
    inv_std: Vec<f32>,
}

impl Standardizer {
    fn fit(features: &dyn Features, rows: &[usize]) -> Self {
        let f = features.n_features();
        let mut buf = vec![0f32; f];
        let mut sum = vec![0f64; f];
        let mut lo = vec![f32::INFINITY; f];
        let mut hi = vec![f32::NEG_INFINITY; f];
        for &r in rows {
            features.write_row(r, &mut buf);
            for k in 0..f {
                sum[k] += buf[k] as f64;
                lo[k] = lo[k].min(buf[k]);
                hi[k] = hi[k].max(buf[k]);
            }
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut sq = vec![0f64; f];
        for &r in rows {
            features.write_row(r, &mut buf);
            for k in 0..f {
                sq[k] += (buf[k] as f64 - mean[k]).powi(2);
            }
        }
        let inv_std = (0..f)
            .map(|k| {
                if lo[k] == hi[k] {
                    0.0
                } else {
                    (1.0 / (sq[k] / n).sqrt()) as f32
                }
            })
            .collect();
        Self {
            mean: mean.iter().map(|&m| m as f32).collect(),
            inv_std,
        }
    }

    fn transform(&self, row: &mut [f32]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
            *x = (*x - m) * s;
        }
    }
}

/// Multinomial logistic regression over standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `classes × features`.
    pub weights: Array2<f32>,
    pub bias: Array1<f32>,
    pub config: TrainConfig,
    standardizer: Standardizer,
}

impl LinearClassifier {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    /// Class probabilities for `rows`, one row per sample.
    pub fn predict_proba(&self, features: &dyn Features, rows: &[usize]) -> Array2<f64> {
        let (c, f) = self.weights.dim();
        let chunk = self.config.hyper.batch_size.max(1);
        let mut x = Array2::<f32>::zeros((chunk, f));
        let mut logits = Array2::<f32>::zeros((chunk, c));
        let mut out = Array2::<f64>::zeros((rows.len(), c));
        for (b, batch) in rows.chunks(chunk).enumerate() {
            let m = batch.len();
            self.fill(features, batch, &mut x);
            let mut lg = logits.slice_mut(s![..m, ..]);
            general_mat_mul(1.0, &x.slice(s![..m, ..]), &self.weights.t(), 0.0, &mut lg);
            for (i, row) in lg.rows().into_iter().enumerate() {
                let probs = softmax(row.iter().zip(&self.bias).map(|(l, b)| l + b));
                for (k, p) in probs.into_iter().enumerate() {
                    out[[b * chunk + i, k]] = p;
                }
            }
        }
        out
    }

    pub fn predict(&self, features: &dyn Features, rows: &[usize]) -> Vec<u32> {
        self.predict_proba(features, rows)
            .rows()
            .into_iter()
            .map(|p| argmax(p.iter().copied()) as u32)
            .collect()
    }

    /// Top-1 accuracy on `rows` against `labels` (indexed by sample).
    pub fn accuracy(&self, features: &dyn Features, rows: &[usize], labels: &[u32]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let pred = self.predict(features, rows);
        let hits = rows.iter().zip(&pred).filter(|(&r, &p)| labels[r] == p).count();
        hits as f64 / rows.len() as f64
    }

    fn fill(&self, features: &dyn Features, batch: &[usize], x: &mut Array2<f32>) {
        for (i, &r) in batch.iter().enumerate() {
            let row = x.row_mut(i).into_slice().expect("row-major batch buffer");
            features.write_row(r, row);
            self.standardizer.transform(row);
        }
    }
}

fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn softmax(logits: impl Iterator<Item = f32>) -> Vec<f64> {
    let l: Vec<f64> = logits.map(|v| v as f64).collect();
    let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = l.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Trains on every row of a dense matrix; classes are `0..=max(label)`.
pub fn train_logreg(features: &Array2<f64>, labels: &[u32], config: &TrainConfig) -> Result<LinearClassifier> {
    if labels.len() != features.nrows() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: features.nrows(),
        });
    }
    if let Some((i, v)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            value: *v,
            location: format!("feature element {i}"),
        });
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
    let rows: Vec<usize> = (0..labels.len()).collect();
    train_on(&DenseFeatures(features), &rows, labels, n_classes, config)
}

/// Logit gaps below this contribute less than `e^-50` and are treated as zero.
const FLUSH_BELOW: f32 = -50.0;

/// Minimizes L2-regularized softmax cross-entropy by mini-batch gradient
/// descent over `rows`. `labels` is indexed by sample.
pub fn train_on(
    features: &dyn Features,
    rows: &[usize],
    labels: &[u32],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<LinearClassifier> {
    config.hyper.validate()?;
    let distinct: std::collections::BTreeSet<u32> = rows.iter().map(|&r| labels[r]).collect();
    if n_classes < 2 || distinct.len() < 2 {
        return Err(Error::SingleClass);
    }
    if let Some(&bad) = distinct.iter().find(|&&c| c as usize >= n_classes) {
        return Err(Error::BinOutOfRange {
            value: bad,
            bins: n_classes as u32,
            position: 0,
        });
    }

    let f = features.n_features();
    let hp = config.hyper;
    let mut rng = seed::rng(config.seed);
    let init = Normal::new(0.0f32, 0.01).expect("valid normal");
    let mut clf = LinearClassifier {
        weights: Array2::from_shape_fn((n_classes, f), |_| init.sample(&mut rng)),
        bias: Array1::zeros(n_classes),
        config: *config,
        standardizer: Standardizer::fit(features, rows),
    };

    let bs = hp.batch_size;
    let lr = hp.learning_rate as f32;
    let decay = 1.0 - (hp.learning_rate * hp.l2) as f32;
    let mut order = rows.to_vec();
    let mut x = Array2::<f32>::zeros((bs, f));
    let mut grad_logits = Array2::<f32>::zeros((bs, n_classes));
    let mut grad_w = Array2::<f32>::zeros((n_classes, f));
    let mut last_finite = f64::NAN;

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, batch) in order.chunks(bs).enumerate() {
            let m = batch.len();
            clf.fill(features, batch, &mut x);
            let xb = x.slice(s![..m, ..]);
            let mut g = grad_logits.slice_mut(s![..m, ..]);
            general_mat_mul(1.0, &xb, &clf.weights.t(), 0.0, &mut g);

            let mut loss = 0.0f64;
            let inv_m = 1.0 / m as f32;
            for (i, mut row) in g.rows_mut().into_iter().enumerate() {
                row.iter_mut().zip(&clf.bias).for_each(|(l, b)| *l += b);
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let y = labels[batch[i]] as usize;
                let margin = (max - row[y]) as f64;
                let mut z = 0.0f32;
                row.iter_mut().for_each(|l| {
                    // Terms this small would turn into subnormal gradients,
                    // which slow the backward product by an order of magnitude.
                    *l = if *l - max < FLUSH_BELOW { 0.0 } else { (*l - max).exp() };
                    z += *l;
                });
                loss += margin + (z as f64).ln();
                row.iter_mut().for_each(|p| *p = *p / z * inv_m);
                row[y] -= inv_m;
            }
            loss /= m as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    last_finite,
                });
            }
            last_finite = loss;

            general_mat_mul(1.0, &g.t(), &xb, 0.0, &mut grad_w);
            Zip::from(&mut clf.weights)
                .and(&grad_w)
                .for_each(|w, &g| *w = *w * decay - lr * g);
            let gb = g.sum_axis(ndarray::Axis(0));
            clf.bias.scaled_add(-lr, &gb);
        }
        if clf.weights.iter().chain(clf.bias.iter()).any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(bs),
                last_finite,
            });
        }
    }
    Ok(clf)
}

/// Rank-based (Mann–Whitney) area under the ROC curve; tied scores count one half.
pub fn auc_roc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: positives.len(),
        });
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateClasses {
            positives: n_pos,
            negatives: n_neg,
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            value: *s,
            location: "AUC scores".into(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += mid * order[i..=j].iter().filter(|&&k| positives[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

fn split_once(labels: &[u32], test_fraction: f64, seed_value: u64) -> Split {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = seed::rng(seed_value);
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = if n >= 2 {
            ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1)
        } else {
            0
        };
        split.test.extend_from_slice(&members[..n_test]);
        split.train.extend_from_slice(&members[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    split
}

fn missing_class(labels: &[u32], split: &Split) -> Option<(u32, &'static str)> {
    let all: std::collections::BTreeSet<u32> = labels.iter().copied().collect();
    let train: std::collections::BTreeSet<u32> = split.train.iter().map(|&i| labels[i]).collect();
    let test: std::collections::BTreeSet<u32> = split.test.iter().map(|&i| labels[i]).collect();
    all.iter().find_map(|c| {
        if !train.contains(c) {
            Some((*c, "train"))
        } else if !test.contains(c) {
            Some((*c, "test"))
        } else {
            None
        }
    })
}

/// Stratified train/test split. Every class must land in both halves; if
/// not, one resplit with a derived seed is attempted before failing.
pub fn stratified_split(labels: &[u32], config: SplitConfig) -> Result<Split> {
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must lie in (0, 1), got {}",
            config.test_fraction
        )));
    }
    let first = split_once(labels, config.test_fraction, config.seed);
    if missing_class(labels, &first).is_none() {
        return Ok(first);
    }
    let retry = split_once(
        labels,
        config.test_fraction,
        seed::derive(config.seed, &[seed::STREAM_RESPLIT]),
    );
    match missing_class(labels, &retry) {
        None => Ok(retry),
        Some((class, split)) => Err(Error::ClassMissingFromSplit { class, split }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAuc {
    pub class: u32,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitnessResult {
    pub scope: FeatureScope,
    pub per_class_auc: Vec<ClassAuc>,
    /// Mean of `(AUC - 0.5) / 0.5` over classes, clamped to `[0, 1]`.
    pub score: f64,
}

/// Normalizes one-vs-rest AUCs to a `[0, 1]` explicitness score.
pub fn explicitness_from_aucs(aucs: &[f64]) -> f64 {
    if aucs.is_empty() {
        return 0.0;
    }
    let mean = aucs.iter().map(|a| (a - 0.5) / 0.5).sum::<f64>() / aucs.len() as f64;
    mean.clamp(0.0, 1.0)
}

/// Explicitness of `factor` from the codes in `scope`, using a precomputed split.
pub fn explicitness_with_split(
    data: &PairedDataset,
    factor: usize,
    scope: FeatureScope,
    split: &Split,
    config: &TrainConfig,
) -> Result<ExplicitnessResult> {
    let f = data.factors().factor(factor);
    let labels = f.codes()?;
    let n_classes = f.cardinality().unwrap_or(1) as usize;
    let features = CodeFeatures::new(data.codes(), scope)?;
    let clf = train_on(&features, &split.train, labels, n_classes, config)?;
    let proba = clf.predict_proba(&features, &split.test);
    let classes: std::collections::BTreeSet<u32> = split.test.iter().map(|&i| labels[i]).collect();
    let per_class_auc = classes
        .iter()
        .map(|&c| {
            let scores: Vec<f64> = proba.column(c as usize).to_vec();
            let positives: Vec<bool> = split.test.iter().map(|&i| labels[i] == c).collect();
            Ok(ClassAuc {
                class: c,
                auc: auc_roc(&scores, &positives)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aucs: Vec<f64> = per_class_auc.iter().map(|c| c.auc).collect();
    Ok(ExplicitnessResult {
        scope,
        score: explicitness_from_aucs(&aucs),
        per_class_auc,
    })
}

/// Explicitness of `factor` with a fresh stratified split.
pub fn explicitness(
    data: &PairedDataset,
    factor: usize,
    scope: FeatureScope,
    split: SplitConfig,
    config: &TrainConfig,
) -> Result<ExplicitnessResult> {
    let labels = data.factors().column(factor)?;
    let split = stratified_split(labels, split)?;
    explicitness_with_split(data, factor, scope, &split, config)
}
