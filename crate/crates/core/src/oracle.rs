//! Deliberately naive reference implementations used to cross-check the
//! metric modules. Nothing here shares code with them.

use ndarray::Array2;

use crate::dataset::PairedDataset;
use crate::error::{Error, Result};

/// Mutual information by a literal double loop over every `(i, j)` bin pair,
/// rescanning the samples for each probability.
pub fn brute_force_mi(v: &[u32], z: &[u32], bins_v: u32, bins_z: u32) -> Result<f64> {
    if v.len() != z.len() {
        return Err(Error::LengthMismatch {
            left: v.len(),
            right: z.len(),
        });
    }
    if v.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (pos, &x) in v.iter().enumerate() {
        if x >= bins_v {
            return Err(Error::BinOutOfRange { value: x, bins: bins_v, position: pos });
        }
    }
    for (pos, &x) in z.iter().enumerate() {
        if x >= bins_z {
            return Err(Error::BinOutOfRange { value: x, bins: bins_z, position: pos });
        }
    }
    let n = v.len() as f64;
    let mut total = 0.0;
    for i in 0..bins_v {
        for j in 0..bins_z {
            let mut joint = 0usize;
            let mut marg_v = 0usize;
            let mut marg_z = 0usize;
            for k in 0..v.len() {
                if v[k] == i {
                    marg_v += 1;
                }
                if z[k] == j {
                    marg_z += 1;
                }
                if v[k] == i && z[k] == j {
                    joint += 1;
                }
            }
            if joint == 0 {
                continue;
            }
            let p_ij = joint as f64 / n;
            let p_i = marg_v as f64 / n;
            let p_j = marg_z as f64 / n;
            total += p_ij * (p_ij / (p_i * p_j)).log2();
        }
    }
    Ok(if total < 0.0 { 0.0 } else { total })
}

/// Interventional robustness by explicit group-by with no indexing structures.
///
/// Uses the same range-box normalization as the `irs` module.
pub fn brute_force_irs(
    data: &PairedDataset,
    pooled: &Array2<f64>,
    target: usize,
    dims: &[usize],
    min_group_size: usize,
) -> Result<f64> {
    let table = data.factors();
    let target_name = table.factor(target).name().to_string();
    if dims.is_empty() {
        return Err(Error::EmptyDimensionSubset);
    }
    if table.n_factors() < 2 {
        return Err(Error::NoNuisanceVariation(target_name));
    }
    let n = table.n_samples();
    let target_col = table.column(target)?.to_vec();
    let mut nuisance_rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for k in 0..table.n_factors() {
        if k == target {
            continue;
        }
        let col = table.column(k)?;
        for i in 0..n {
            nuisance_rows[i].push(col[i]);
        }
    }

    let mut target_values: Vec<u32> = Vec::new();
    for &t in &target_col {
        if !target_values.contains(&t) {
            target_values.push(t);
        }
    }

    let mut any_variation = false;
    let mut any_usable = false;
    let mut raw = 0.0;
    let mut scale: f64 = 0.0;
    for &t in &target_values {
        let members: Vec<usize> = (0..n).filter(|&i| target_col[i] == t).collect();
        let mut reference = vec![0.0; dims.len()];
        for &i in &members {
            for (r, &j) in dims.iter().enumerate() {
                reference[r] += pooled[[i, j]];
            }
        }
        for r in reference.iter_mut() {
            *r /= members.len() as f64;
        }

        let mut configs: Vec<Vec<u32>> = Vec::new();
        for &i in &members {
            if !configs.contains(&nuisance_rows[i]) {
                configs.push(nuisance_rows[i].clone());
            }
        }
        if configs.len() >= 2 {
            any_variation = true;
        }

        let mut worst: f64 = 0.0;
        for config in &configs {
            let cell: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| &nuisance_rows[i] == config)
                .collect();
            if cell.len() < min_group_size {
                continue;
            }
            any_usable = true;
            let mut sq = 0.0;
            for (r, &j) in dims.iter().enumerate() {
                let mut m = 0.0;
                for &i in &cell {
                    m += pooled[[i, j]];
                }
                m /= cell.len() as f64;
                sq += (m - reference[r]) * (m - reference[r]);
            }
            worst = worst.max(sq.sqrt());
        }
        raw += members.len() as f64 / n as f64 * worst;

        let mut bound_sq = 0.0;
        for (r, &j) in dims.iter().enumerate() {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..n {
                lo = lo.min(pooled[[i, j]]);
                hi = hi.max(pooled[[i, j]]);
            }
            let reach = (reference[r] - lo).max(hi - reference[r]);
            bound_sq += reach * reach;
        }
        scale = scale.max(bound_sq.sqrt());
    }
    if !any_variation || !any_usable {
        return Err(Error::NoNuisanceVariation(target_name));
    }
    if scale == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - raw / scale).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{validate_pairing, CodeTensor, Factor, FactorTable};
    use crate::info::mutual_information;

    #[test]
    fn brute_force_mi_examples() {
        let copy = brute_force_mi(&[0, 1, 1, 2], &[0, 1, 1, 2], 3, 3).unwrap();
        assert!((copy - 1.5).abs() < 1e-12);
        assert_eq!(brute_force_mi(&[0, 0, 1, 1], &[0, 1, 0, 1], 2, 2).unwrap(), 0.0);
        let v = [0, 0, 0, 1, 1, 1];
        let z = [0, 0, 1, 1, 2, 2];
        let a = brute_force_mi(&v, &z, 2, 3).unwrap();
        assert!((a - mutual_information(&v, &z, 2, 3).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn brute_force_irs_invariant_codes() {
        let t: Vec<u32> = (0..12).map(|i| i % 3).collect();
        let u: Vec<u32> = (0..12).map(|i| (i / 3) % 2).collect();
        let ft = FactorTable::new(vec![
            Factor::from_codes("t", t.clone()).unwrap(),
            Factor::from_codes("u", u).unwrap(),
        ])
        .unwrap();
        let d = validate_pairing(ft, CodeTensor::from_vec(12, 1, 1, vec![0.0; 12]).unwrap()).unwrap();
        let pooled = Array2::from_shape_fn((12, 1), |(i, _)| t[i] as f64);
        assert_eq!(brute_force_irs(&d, &pooled, 0, &[0], 2).unwrap(), 1.0);
    }
}
