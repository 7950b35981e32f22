//! Histogram entropy and mutual information, MIG and JEMMIG.
//!
//! All quantities are in bits. Empirical probabilities come from counts;
//! empty histogram cells contribute nothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PairedDataset;
use crate::discretize::BinnedCodes;
use crate::error::{Error, Result};

fn check_range(values: &[u32], bins: u32) -> Result<()> {
    match values.iter().enumerate().find(|(_, &v)| v >= bins) {
        Some((position, &value)) => Err(Error::BinOutOfRange {
            value,
            bins,
            position,
        }),
        None => Ok(()),
    }
}

fn entropy_of_counts(counts: impl IntoIterator<Item = u64>, total: f64) -> f64 {
    let h: f64 = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Shannon entropy of an integer column with values in `[0, cardinality)`.
pub fn entropy(column: &[u32], cardinality: u32) -> Result<f64> {
    if column.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_range(column, cardinality)?;
    let mut counts = vec![0u64; cardinality as usize];
    column.iter().for_each(|&v| counts[v as usize] += 1);
    Ok(entropy_of_counts(counts, column.len() as f64))
}

/// Joint histogram of two equally long columns, row-major `bins_v × bins_z`.
fn joint_counts(v: &[u32], z: &[u32], bins_v: u32, bins_z: u32) -> Vec<u64> {
    let bz = bins_z as usize;
    let mut joint = vec![0u64; bins_v as usize * bz];
    for (&a, &b) in v.iter().zip(z) {
        joint[a as usize * bz + b as usize] += 1;
    }
    joint
}

fn check_pair(v: &[u32], z: &[u32], bins_v: u32, bins_z: u32) -> Result<()> {
    if v.len() != z.len() {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: z.len(),
        });
    }
    if v.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_range(v, bins_v)?;
    check_range(z, bins_z)
}

/// Joint entropy `H(v, z)`.
pub fn joint_entropy(v: &[u32], z: &[u32], bins_v: u32, bins_z: u32) -> Result<f64> {
    check_pair(v, z, bins_v, bins_z)?;
    Ok(entropy_of_counts(
        joint_counts(v, z, bins_v, bins_z),
        v.len() as f64,
    ))
}

/// Plug-in mutual information `I(v; z)` from the empirical joint histogram.
pub fn mutual_information(v: &[u32], z: &[u32], bins_v: u32, bins_z: u32) -> Result<f64> {
    check_pair(v, z, bins_v, bins_z)?;
    Ok(mi_unchecked(v, z, bins_v, bins_z))
}

fn mi_unchecked(v: &[u32], z: &[u32], bins_v: u32, bins_z: u32) -> f64 {
    let n = v.len() as f64;
    let joint = joint_counts(v, z, bins_v, bins_z);
    let bz = bins_z as usize;
    let mut row = vec![0u64; bins_v as usize];
    let mut col = vec![0u64; bz];
    for (idx, &c) in joint.iter().enumerate() {
        row[idx / bz] += c;
        col[idx % bz] += c;
    }
    let mut mi = 0.0;
    for (idx, &c) in joint.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (r, k) = (row[idx / bz] as f64, col[idx % bz] as f64);
        mi += (c as f64 / n) * ((c as f64 * n) / (r * k)).log2();
    }
    mi.max(0.0)
}

/// `I(v_i; z_j)` for every factor `i` and code dimension `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiMatrix {
    /// Row per factor, column per code dimension.
    pub values: Vec<Vec<f64>>,
    pub factor_entropies: Vec<f64>,
    pub effective_code_bins: Vec<u32>,
}

impl MiMatrix {
    pub fn n_factors(&self) -> usize {
        self.values.len()
    }

    pub fn n_dims(&self) -> usize {
        self.effective_code_bins.len()
    }

    pub fn row(&self, factor: usize) -> &[f64] {
        &self.values[factor]
    }
}

/// Mutual information between every factor column and every binned code dimension.
pub fn mi_matrix(data: &PairedDataset, codes: &BinnedCodes) -> Result<MiMatrix> {
    let factors = data.factors();
    if codes.n_samples() != data.n_samples() {
        return Err(Error::SampleCountMismatch {
            factors: data.n_samples(),
            codes: codes.n_samples(),
        });
    }
    let columns: Vec<(&[u32], u32)> = factors
        .factors()
        .iter()
        .map(|f| Ok((f.codes()?, f.cardinality().unwrap_or(1))))
        .collect::<Result<_>>()?;
    for (col, card) in &columns {
        check_range(col, *card)?;
    }
    let bins = codes.effective_bins();
    for (j, &b) in bins.iter().enumerate() {
        check_range(codes.column(j), b)?;
    }

    let d = codes.n_dims();
    let cells: Vec<f64> = (0..columns.len() * d)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / d, cell % d);
            let (v, bv) = columns[i];
            mi_unchecked(v, codes.column(j), bv, bins[j])
        })
        .collect();
    let factor_entropies = columns
        .iter()
        .map(|(col, card)| entropy(col, *card))
        .collect::<Result<_>>()?;
    Ok(MiMatrix {
        values: cells.chunks(d.max(1)).map(<[f64]>::to_vec).collect(),
        factor_entropies,
        effective_code_bins: bins.to_vec(),
    })
}

/// Entropies at or below this are treated as zero.
pub const ZERO_ENTROPY: f64 = 1e-12;

/// Best and runner-up code dimensions for a factor; ties go to the lower index.
fn top_two(row: &[f64]) -> (usize, usize) {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    (best, best_excluding(row, best))
}

fn best_excluding(row: &[f64], skip: usize) -> usize {
    let mut second = usize::MAX;
    for (j, &v) in row.iter().enumerate() {
        if j != skip && (second == usize::MAX || v > row[second]) {
            second = j;
        }
    }
    second
}

fn check_factor(mi: &MiMatrix, factor: usize) -> Result<f64> {
    if mi.n_dims() < 2 {
        return Err(Error::TooFewDimensions {
            required: 2,
            found: mi.n_dims(),
        });
    }
    let h = mi.factor_entropies[factor];
    if h <= ZERO_ENTROPY {
        return Err(Error::ZeroEntropy(format!("#{factor}")));
    }
    Ok(h)
}

/// Mutual information gap of one factor: the normalized gap between the two
/// most informative code dimensions.
pub fn mig(mi: &MiMatrix, factor: usize) -> Result<f64> {
    let h = check_factor(mi, factor)?;
    let row = mi.row(factor);
    let (best, second) = top_two(row);
    Ok(((row[best] - row[second]) / h).clamp(0.0, 1.0))
}

/// Mean MIG over factors with non-zero entropy; `None` when there are none.
pub fn dataset_mig(mi: &MiMatrix) -> Result<Option<f64>> {
    let mut scores = Vec::new();
    for i in 0..mi.n_factors() {
        match mig(mi, i) {
            Ok(s) => scores.push(s),
            Err(Error::ZeroEntropy(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(mean(&scores))
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Raw (lower is better) and normalized (higher is better) JEMMIG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jemmig {
    pub raw: f64,
    pub normalized: f64,
    pub best_dim: usize,
    pub runner_up_dim: usize,
}

/// JEMMIG of factor `factor` with `z*` and `z∘` chosen from the MI row.
pub fn jemmig(
    data: &PairedDataset,
    codes: &BinnedCodes,
    mi: &MiMatrix,
    factor: usize,
) -> Result<Jemmig> {
    check_factor(mi, factor)?;
    let (best, second) = top_two(mi.row(factor));
    jemmig_for(data, codes, mi, factor, best, second)
}

/// JEMMIG with `z* := dim` and `z∘` the most informative other dimension.
pub fn jemmig_at(
    data: &PairedDataset,
    codes: &BinnedCodes,
    mi: &MiMatrix,
    factor: usize,
    dim: usize,
) -> Result<Jemmig> {
    check_factor(mi, factor)?;
    let other = best_excluding(mi.row(factor), dim);
    jemmig_for(data, codes, mi, factor, dim, other)
}

fn jemmig_for(
    data: &PairedDataset,
    codes: &BinnedCodes,
    mi: &MiMatrix,
    factor: usize,
    best: usize,
    second: usize,
) -> Result<Jemmig> {
    let f = data.factors().factor(factor);
    let v = f.codes()?;
    let bins_v = f.cardinality().unwrap_or(1);
    let bins_z = mi.effective_code_bins[best];
    let h_joint = joint_entropy(v, codes.column(best), bins_v, bins_z)?;
    let row = mi.row(factor);
    let raw = h_joint - row[best] + row[second];
    let bound = mi.factor_entropies[factor] + (bins_z as f64).log2();
    Ok(Jemmig {
        raw,
        normalized: (1.0 - raw / bound).clamp(0.0, 1.0),
        best_dim: best,
        runner_up_dim: second,
    })
}

/// Mean normalized JEMMIG over factors with non-zero entropy.
pub fn dataset_jemmig(data: &PairedDataset, codes: &BinnedCodes, mi: &MiMatrix) -> Result<Option<f64>> {
    let mut scores = Vec::new();
    for i in 0..mi.n_factors() {
        match jemmig(data, codes, mi, i) {
            Ok(s) => scores.push(s.normalized),
            Err(Error::ZeroEntropy(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(mean(&scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{validate_pairing, CodeTensor, Factor, FactorTable};
    use proptest::prelude::*;

    const TOL: f64 = 1e-9;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn entropy_examples() {
        assert!(close(entropy(&[0, 1, 0, 1], 2).unwrap(), 1.0, TOL));
        assert_eq!(entropy(&[0, 0, 0, 0], 2).unwrap(), 0.0);
        let expected = -(0.75f64 * 0.75f64.log2()) - 0.25 * 0.25f64.log2();
        let h = entropy(&[0, 0, 0, 1], 2).unwrap();
        assert!(close(h, expected, 1e-12));
        assert!(close(h, 0.8113, 1e-4));
        assert!(entropy(&[], 2).is_err());
        assert!(entropy(&[2], 2).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        assert!(close(mutual_information(&[0, 0, 1, 1], &[0, 0, 1, 1], 2, 2).unwrap(), 1.0, TOL));
        assert!(close(mutual_information(&[0, 0, 1, 1], &[0, 1, 0, 1], 2, 2).unwrap(), 0.0, TOL));
        let i = mutual_information(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2], 2, 3).unwrap();
        assert!(close(i, 2.0 / 3.0, TOL));
        assert!(matches!(
            mutual_information(&[0, 1], &[0], 2, 2),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn matrix(rows: Vec<Vec<f64>>, h: Vec<f64>) -> MiMatrix {
        let d = rows[0].len();
        MiMatrix {
            values: rows,
            factor_entropies: h,
            effective_code_bins: vec![2; d],
        }
    }

    #[test]
    fn mig_examples() {
        assert_eq!(mig(&matrix(vec![vec![1.0, 0.0, 0.0]], vec![1.0]), 0).unwrap(), 1.0);
        assert_eq!(mig(&matrix(vec![vec![1.0, 1.0, 0.0]], vec![1.0]), 0).unwrap(), 0.0);
        let m = mig(&matrix(vec![vec![2.0 / 3.0, 0.0]], vec![1.0]), 0).unwrap();
        assert!(close(m, 0.6667, 1e-4));
    }

    #[test]
    fn mig_errors_and_exclusions() {
        assert!(matches!(
            mig(&matrix(vec![vec![1.0]], vec![1.0]), 0),
            Err(Error::TooFewDimensions { .. })
        ));
        let m = matrix(vec![vec![0.0, 0.0], vec![1.0, 0.5]], vec![0.0, 1.0]);
        assert!(matches!(mig(&m, 0), Err(Error::ZeroEntropy(_))));
        assert_eq!(dataset_mig(&m).unwrap(), Some(0.5));
        let all_zero = matrix(vec![vec![0.0, 0.0]], vec![0.0]);
        assert_eq!(dataset_mig(&all_zero).unwrap(), None);
    }

    #[test]
    fn ties_prefer_lowest_dimension() {
        assert_eq!(top_two(&[0.5, 0.9, 0.9, 0.1]), (1, 2));
        assert_eq!(top_two(&[0.0, 0.0]), (0, 1));
        assert_eq!(best_excluding(&[0.3, 0.3, 0.3], 0), 1);
    }

    fn paired(factor_cols: Vec<Vec<u32>>, n: usize) -> PairedDataset {
        let factors = factor_cols
            .into_iter()
            .enumerate()
            .map(|(k, c)| Factor::from_codes(format!("f{k}"), c).unwrap())
            .collect();
        let ft = FactorTable::new(factors).unwrap();
        let ct = CodeTensor::from_vec(n, 1, 1, vec![0.0; n]).unwrap();
        validate_pairing(ft, ct).unwrap()
    }

    #[test]
    fn jemmig_worked_case() {
        let data = paired(vec![vec![0, 0, 0, 1, 1, 1]], 6);
        let codes = BinnedCodes::from_columns(
            vec![vec![0, 0, 1, 1, 2, 2], vec![0; 6]],
            vec![3, 1],
        )
        .unwrap();
        let mi = mi_matrix(&data, &codes).unwrap();
        let j = jemmig(&data, &codes, &mi, 0).unwrap();
        let h_joint = joint_entropy(data.factors().column(0).unwrap(), codes.column(0), 2, 3).unwrap();
        assert!(close(h_joint, 1.9183, 1e-4));
        assert!(close(j.raw, 1.2516, 1e-4));
        assert!(close(j.normalized, 0.5158, 1e-4));
        assert_eq!((j.best_dim, j.runner_up_dim), (0, 1));
    }

    #[test]
    fn jemmig_extremes() {
        let data = paired(vec![vec![0, 0, 1, 1]], 4);
        let copy = BinnedCodes::from_columns(vec![vec![0, 0, 1, 1], vec![0; 4]], vec![2, 1]).unwrap();
        let mi = mi_matrix(&data, &copy).unwrap();
        let j = jemmig(&data, &copy, &mi, 0).unwrap();
        assert!(close(j.raw, 0.0, TOL));
        assert!(close(j.normalized, 1.0, TOL));

        let indep = BinnedCodes::from_columns(vec![vec![0, 1, 0, 1], vec![0; 4]], vec![2, 1]).unwrap();
        let mi = mi_matrix(&data, &indep).unwrap();
        let j = jemmig(&data, &indep, &mi, 0).unwrap();
        assert!(close(j.raw, 2.0, TOL));
        assert!(close(j.normalized, 0.0, TOL));
    }

    #[test]
    fn mi_matrix_shapes_and_constants() {
        let data = paired(vec![vec![0, 1, 0, 1], vec![0, 0, 1, 1]], 4);
        let constant = BinnedCodes::from_columns(vec![vec![0; 4], vec![0; 4]], vec![1, 1]).unwrap();
        let mi = mi_matrix(&data, &constant).unwrap();
        assert!(mi.values.iter().flatten().all(|&v| v == 0.0));

        let single = paired(vec![vec![0, 1, 1, 0]], 4);
        let copy = BinnedCodes::from_columns(vec![vec![0, 1, 1, 0]], vec![2]).unwrap();
        let mi = mi_matrix(&single, &copy).unwrap();
        assert_eq!(mi.values.len(), 1);
        assert!(close(mi.values[0][0], mi.factor_entropies[0], TOL));
    }

    fn columns_strategy() -> impl Strategy<Value = (Vec<u32>, Vec<u32>, u32, u32)> {
        (1u32..=4, 1u32..=4, 1usize..=64).prop_flat_map(|(bv, bz, n)| {
            (
                prop::collection::vec(0..bv, n),
                prop::collection::vec(0..bz, n),
                Just(bv),
                Just(bz),
            )
        })
    }

    proptest! {
        #[test]
        fn mi_is_symmetric((v, z, bv, bz) in columns_strategy()) {
            let a = mutual_information(&v, &z, bv, bz).unwrap();
            let b = mutual_information(&z, &v, bz, bv).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn mi_bounded_by_marginal_entropies((v, z, bv, bz) in columns_strategy()) {
            let i = mutual_information(&v, &z, bv, bz).unwrap();
            let hv = entropy(&v, bv).unwrap();
            let hz = entropy(&z, bz).unwrap();
            prop_assert!(i >= 0.0);
            prop_assert!(i <= hv.min(hz) + 1e-9);
            prop_assert!(hv <= (bv as f64).log2() + 1e-9);
        }

        #[test]
        fn relabeling_code_bins_preserves_metrics(
            (v, z, bv, bz) in columns_strategy(),
            shift in 0u32..4,
        ) {
            let relabel: Vec<u32> = z.iter().map(|&b| (b + shift) % bz).collect();
            let a = mutual_information(&v, &z, bv, bz).unwrap();
            let b = mutual_information(&v, &relabel, bv, bz).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);

            let n = v.len();
            let data = paired(vec![v.clone()], n);
            let noise: Vec<u32> = (0..n as u32).map(|i| i % 2).collect();
            let orig = BinnedCodes::from_columns(vec![z.clone(), noise.clone()], vec![bz, 2]).unwrap();
            let perm = BinnedCodes::from_columns(vec![relabel, noise], vec![bz, 2]).unwrap();
            let m1 = mi_matrix(&data, &orig).unwrap();
            let m2 = mi_matrix(&data, &perm).unwrap();
            if m1.factor_entropies[0] > ZERO_ENTROPY {
                prop_assert!((mig(&m1, 0).unwrap() - mig(&m2, 0).unwrap()).abs() < 1e-9);
                let j1 = jemmig(&data, &orig, &m1, 0).unwrap();
                let j2 = jemmig(&data, &perm, &m2, 0).unwrap();
                prop_assert!((j1.normalized - j2.normalized).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&j1.normalized));
                prop_assert!((0.0..=1.0).contains(&mig(&m1, 0).unwrap()));
            }
        }
    }
}
