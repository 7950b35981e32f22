//! Interventional robustness score.
//!
//! For each value of the target factor, the reference set is every sample
//! with that value. Each nuisance configuration (the full tuple of all other
//! factors) with enough samples forms an intervention cell. The score
//! aggregates the largest ℓ2 distance between a cell's mean code and its
//! reference mean, weighted by target-value prevalence, and normalizes it by
//! the largest distance any point of the observed code bounding box could
//! have from a reference mean.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::error::{Error, Result};

pub const DEFAULT_MIN_GROUP_SIZE: usize = 2;

/// Name of the normalization recorded in reports.
pub const SCALE_NAME: &str = "range-box";

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceCell {
    pub configuration: Vec<u32>,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRealization {
    pub value: u32,
    /// Reference set: every sample with this target value.
    pub samples: Vec<usize>,
    /// Usable intervention cells, ordered by configuration.
    pub cells: Vec<NuisanceCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPlan {
    pub target_factor: usize,
    pub nuisance_factors: Vec<usize>,
    pub realizations: Vec<TargetRealization>,
    pub min_group_size: usize,
    pub n_samples: usize,
    /// Cells dropped for having fewer than `min_group_size` samples.
    pub skipped_cells: usize,
}

impl InterventionPlan {
    pub fn usable_cells(&self) -> usize {
        self.realizations.iter().map(|r| r.cells.len()).sum()
    }
}

/// Groups samples by target value and nuisance configuration.
pub fn build_plan(data: &PairedDataset, target: usize, min_group_size: usize) -> Result<InterventionPlan> {
    let factors = data.factors();
    let name = factors.factor(target).name().to_string();
    if min_group_size == 0 {
        return Err(Error::InvalidConfig("min_group_size must be at least 1".into()));
    }
    let nuisance_factors: Vec<usize> = (0..factors.n_factors()).filter(|&k| k != target).collect();
    if nuisance_factors.is_empty() {
        return Err(Error::NoNuisanceVariation(name));
    }
    let target_col = factors.column(target)?;
    let nuisance_cols = nuisance_factors
        .iter()
        .map(|&k| factors.column(k))
        .collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<u32, BTreeMap<Vec<u32>, Vec<usize>>> = BTreeMap::new();
    for (i, &t) in target_col.iter().enumerate() {
        let config = nuisance_cols.iter().map(|c| c[i]).collect();
        groups.entry(t).or_default().entry(config).or_default().push(i);
    }
    if !groups.values().any(|cells| cells.len() >= 2) {
        return Err(Error::NoNuisanceVariation(name));
    }

    let mut skipped_cells = 0;
    let realizations: Vec<TargetRealization> = groups
        .into_iter()
        .map(|(value, cells)| {
            let mut samples: Vec<usize> = cells.values().flatten().copied().collect();
            samples.sort_unstable();
            let usable: Vec<NuisanceCell> = cells
                .into_iter()
                .filter_map(|(configuration, samples)| {
                    if samples.len() >= min_group_size {
                        Some(NuisanceCell {
                            configuration,
                            samples,
                        })
                    } else {
                        skipped_cells += 1;
                        None
                    }
                })
                .collect();
            TargetRealization {
                value,
                samples,
                cells: usable,
            }
        })
        .collect();
    if realizations.iter().all(|r| r.cells.is_empty()) {
        return Err(Error::NoNuisanceVariation(name));
    }
    Ok(InterventionPlan {
        target_factor: target,
        nuisance_factors,
        realizations,
        min_group_size,
        n_samples: data.n_samples(),
        skipped_cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrsResult {
    /// `1 - raw / scale`, in `[0, 1]`; higher is more robust.
    pub score: f64,
    /// Prevalence-weighted mean of per-target maximum deviations.
    pub raw: f64,
    pub scale: f64,
}

fn mean_code(pooled: &Array2<f64>, samples: &[usize], dims: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0; dims.len()];
    for &s in samples {
        for (a, &j) in acc.iter_mut().zip(dims) {
            *a += pooled[[s, j]];
        }
    }
    let n = samples.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Scores a plan on pooled codes restricted to `dims`.
pub fn irs_with_plan(plan: &InterventionPlan, pooled: &Array2<f64>, dims: &[usize]) -> Result<IrsResult> {
    if dims.is_empty() {
        return Err(Error::EmptyDimensionSubset);
    }
    if pooled.nrows() != plan.n_samples {
        return Err(Error::LengthMismatch {
            left: pooled.nrows(),
            right: plan.n_samples,
        });
    }
    if let Some(&j) = dims.iter().find(|&&j| j >= pooled.ncols()) {
        return Err(Error::InvalidConfig(format!("dimension {j} out of range")));
    }
    let (lo, hi): (Vec<f64>, Vec<f64>) = dims
        .iter()
        .map(|&j| {
            pooled
                .column(j)
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)))
        })
        .unzip();

    let n = plan.n_samples as f64;
    let mut raw = 0.0;
    let mut scale = 0.0f64;
    for r in &plan.realizations {
        let reference = mean_code(pooled, &r.samples, dims);
        let worst = r
            .cells
            .iter()
            .map(|c| l2(&mean_code(pooled, &c.samples, dims), &reference))
            .fold(0.0f64, f64::max);
        raw += r.samples.len() as f64 / n * worst;
        let bound = reference
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(&m, (&l, &h))| (m - l).max(h - m).powi(2))
            .sum::<f64>()
            .sqrt();
        scale = scale.max(bound);
    }
    let score = if scale > 0.0 {
        (1.0 - raw / scale).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(IrsResult { score, raw, scale })
}

/// Builds the intervention plan for `target` and scores it on `dims`.
pub fn irs_score(
    data: &PairedDataset,
    pooled: &Array2<f64>,
    target: usize,
    dims: &[usize],
    min_group_size: usize,
) -> Result<IrsResult> {
    let plan = build_plan(data, target, min_group_size)?;
    irs_with_plan(&plan, pooled, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{validate_pairing, CodeTensor, Factor, FactorTable};
    use proptest::prelude::*;

    fn data(cols: Vec<Vec<u32>>) -> PairedDataset {
        let n = cols[0].len();
        let factors = cols
            .into_iter()
            .enumerate()
            .map(|(k, c)| Factor::from_codes(format!("f{k}"), c).unwrap())
            .collect();
        validate_pairing(
            FactorTable::new(factors).unwrap(),
            CodeTensor::from_vec(n, 1, 1, vec![0.0; n]).unwrap(),
        )
        .unwrap()
    }

    /// 3 target values × 4 nuisance values, each cell repeated twice.
    fn grid() -> (Vec<u32>, Vec<u32>) {
        let mut t = Vec::new();
        let mut u = Vec::new();
        for _ in 0..2 {
            for a in 0..3 {
                for b in 0..4 {
                    t.push(a);
                    u.push(b);
                }
            }
        }
        (t, u)
    }

    #[test]
    fn medium_grid_style_plan() {
        let mut spk = Vec::new();
        let mut style = Vec::new();
        for s in 0..25 {
            for e in 0..4 {
                for _ in 0..2 {
                    spk.push(s);
                    style.push(e);
                }
            }
        }
        let d = data(vec![spk, style]);
        let plan = build_plan(&d, 1, 2).unwrap();
        assert_eq!(plan.realizations.len(), 4);
        assert!(plan.realizations.iter().all(|r| r.cells.len() == 25));
        assert_eq!(plan.skipped_cells, 0);
    }

    #[test]
    fn single_factor_is_rejected() {
        let d = data(vec![vec![0, 1, 0, 1]]);
        assert!(matches!(build_plan(&d, 0, 1), Err(Error::NoNuisanceVariation(_))));
    }

    #[test]
    fn no_nuisance_variation_is_rejected() {
        // Nuisance is a function of the target.
        let d = data(vec![vec![0, 0, 1, 1], vec![1, 1, 0, 0]]);
        assert!(matches!(build_plan(&d, 0, 1), Err(Error::NoNuisanceVariation(_))));
    }

    #[test]
    fn small_cells_are_skipped_and_counted() {
        let d = data(vec![vec![0, 0, 0, 1, 1, 1], vec![0, 0, 1, 0, 1, 1]]);
        let plan = build_plan(&d, 0, 2).unwrap();
        assert_eq!(plan.skipped_cells, 2);
        assert_eq!(plan.usable_cells(), 2);
        assert_eq!(plan.realizations[0].samples, vec![0, 1, 2]);
    }

    #[test]
    fn single_configuration_contributes_zero() {
        // Target 0 only ever sees nuisance 0; target 1 sees both.
        let d = data(vec![vec![0, 0, 1, 1, 1, 1], vec![0, 0, 0, 0, 1, 1]]);
        let pooled = Array2::from_shape_vec((6, 1), vec![5.0, 5.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let r = irs_score(&d, &pooled, 0, &[0], 1).unwrap();
        assert_eq!(r.raw, 0.0);
        assert_eq!(r.score, 1.0);
    }

    #[test]
    fn nuisance_invariant_codes_score_one() {
        let (t, u) = grid();
        let d = data(vec![t.clone(), u]);
        let pooled = Array2::from_shape_fn((t.len(), 2), |(i, j)| t[i] as f64 * (j as f64 + 1.0));
        let r = irs_score(&d, &pooled, 0, &[0, 1], 2).unwrap();
        assert_eq!(r.score, 1.0);
        assert_eq!(r.raw, 0.0);
    }

    #[test]
    fn pure_nuisance_one_hot_scores_zero() {
        let t: Vec<u32> = (0..16).map(|i| i % 4).collect();
        let u: Vec<u32> = (0..16).map(|i| (i / 4) % 2).collect();
        let d = data(vec![t, u.clone()]);
        let pooled = Array2::from_shape_fn((16, 2), |(i, j)| (u[i] as usize == j) as u8 as f64);
        let r = irs_score(&d, &pooled, 0, &[0, 1], 2).unwrap();
        assert_eq!(r.score, 0.0);
        assert_eq!(r.raw, r.scale);
    }

    #[test]
    fn empty_dims_rejected() {
        let (t, u) = grid();
        let d = data(vec![t.clone(), u]);
        let pooled = Array2::zeros((t.len(), 1));
        assert!(matches!(
            irs_score(&d, &pooled, 0, &[], 2),
            Err(Error::EmptyDimensionSubset)
        ));
        // Constant codes: no deviation is possible.
        assert_eq!(irs_score(&d, &pooled, 0, &[0], 2).unwrap().score, 1.0);
    }

    proptest! {
        #[test]
        fn translation_and_cell_shuffle_invariance(
            vals in prop::collection::vec(-5.0f64..5.0, 48),
            shift in prop::collection::vec(-100.0f64..100.0, 2),
            rot in 1usize..4,
        ) {
            let (t, u) = grid();
            let d = data(vec![t.clone(), u.clone()]);
            let pooled = Array2::from_shape_vec((24, 2), vals).unwrap();
            let base = irs_score(&d, &pooled, 0, &[0, 1], 2).unwrap();
            prop_assert!((0.0..=1.0).contains(&base.score));

            let moved = Array2::from_shape_fn((24, 2), |(i, j)| pooled[[i, j]] + shift[j]);
            let m = irs_score(&d, &moved, 0, &[0, 1], 2).unwrap();
            prop_assert!((m.score - base.score).abs() < 1e-9);

            // Samples i and i+12 share a cell; swapping their codes is a within-cell shuffle.
            let mut swapped = pooled.clone();
            for i in 0..12 {
                if i % rot == 0 {
                    for j in 0..2 {
                        swapped.swap([i, j], [i + 12, j]);
                    }
                }
            }
            let s = irs_score(&d, &swapped, 0, &[0, 1], 2).unwrap();
            prop_assert!((s.score - base.score).abs() < 1e-12);
        }
    }
}
