use disent_core::dataset::{validate_pairing, CodeTensor, Factor, FactorTable, GridFactor, PairedDataset, SPEAKER, STYLE};
use disent_core::discretize::{bin_pooled, pool_time_axis, BinningSpec, Pooling};
use disent_core::info::{dataset_mig, mi_matrix};
use disent_core::irs::irs_score;
use disent_core::oracle::brute_force_mi;
use disent_core::report::{read_metric_report, render_markdown, run_eval, to_json, LoadedInputs, RunConfig};
use disent_core::synth::{generate, GeneratorSpec};
use ndarray::Axis;
use proptest::prelude::*;

fn dataset(spec: &GeneratorSpec) -> PairedDataset {
    let (factors, codes, _) = generate(spec).unwrap();
    validate_pairing(factors, codes).unwrap()
}

fn small_table() -> impl Strategy<Value = (Vec<(Vec<u32>, u32)>, Vec<f32>, usize, usize)> {
    (4usize..60, 1usize..4, 1usize..4).prop_flat_map(|(n, m, d)| {
        let factor = (2u32..5).prop_flat_map(move |card| (proptest::collection::vec(0..card, n), Just(card)));
        (
            proptest::collection::vec(factor, m),
            proptest::collection::vec(-3.0f32..3.0, n * d),
            Just(n),
            Just(d),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mi_matrix_entries_match_oracle_and_bounds((factors, values, n, d) in small_table(), bins in 2u32..6) {
        let factors: Vec<Factor> = factors
            .into_iter()
            .enumerate()
            .map(|(k, (codes, card))| Factor::categorical(format!("f{k}"), codes, card).unwrap())
            .collect();
        let data = validate_pairing(FactorTable::new(factors).unwrap(), CodeTensor::from_vec(n, d, 1, values).unwrap()).unwrap();
        let binned = bin_pooled(&pool_time_axis(data.codes(), Pooling::Mean), BinningSpec::uniform(bins).unwrap()).unwrap();
        let mi = mi_matrix(&data, &binned).unwrap();
        for i in 0..mi.n_factors() {
            let f = data.factors().factor(i);
            for j in 0..mi.n_dims() {
                let b = binned.effective_bins()[j];
                let oracle = brute_force_mi(f.codes().unwrap(), binned.column(j), f.cardinality().unwrap(), b).unwrap();
                prop_assert!((mi.values[i][j] - oracle).abs() < 1e-12);
                prop_assert!(mi.values[i][j] >= 0.0);
                prop_assert!(mi.values[i][j] <= mi.factor_entropies[i].min((b as f64).log2()) + 1e-9);
            }
        }
    }
}

#[test]
fn irs_falls_as_nuisance_weight_grows() {
    let target = GridFactor::new(SPEAKER, 5);
    let nuisance = GridFactor::new(STYLE, 4);
    let mut last = f64::INFINITY;
    for (k, alpha) in [0.0, 0.25, 0.5, 1.0, 2.0].into_iter().enumerate() {
        let data = dataset(&GeneratorSpec::mixed(target.clone(), nuisance.clone(), alpha, 4, 2000, 0.0, 40 + k as u64));
        let pooled = pool_time_axis(data.codes(), Pooling::Mean);
        let t = data.factors().index_of(SPEAKER).unwrap();
        let score = irs_score(&data, &pooled, t, &[0, 1, 2, 3], 2).unwrap().score;
        if alpha == 0.0 {
            assert_eq!(score, 1.0);
        }
        assert!(score <= last + 1e-12, "alpha {alpha}: {score} after {last}");
        last = score;
    }
    assert!(last < 0.9, "{last}");
}

#[test]
fn mig_ignores_dimension_order() {
    let grid = vec![GridFactor::new(SPEAKER, 6), GridFactor::new(STYLE, 3)];
    let data = dataset(&GeneratorSpec::identity(grid, 6, 1, 3000, 5));
    let spec = BinningSpec::default_codes();
    let mig_of = |d: &PairedDataset| {
        let binned = bin_pooled(&pool_time_axis(d.codes(), Pooling::Mean), spec).unwrap();
        dataset_mig(&mi_matrix(d, &binned).unwrap()).unwrap().unwrap()
    };
    let order = [4, 1, 5, 0, 3, 2];
    let permuted = CodeTensor::new(data.codes().values().select(Axis(1), &order)).unwrap();
    let shuffled = validate_pairing(data.factors().clone(), permuted).unwrap();
    assert!((mig_of(&data) - mig_of(&shuffled)).abs() < 1e-12);
}

#[test]
fn json_report_rerenders_identically() {
    let grid = vec![GridFactor::new(SPEAKER, 4), GridFactor::new(STYLE, 2)];
    let (factors, codes, _) = generate(&GeneratorSpec::planted(grid, 400, 4, 9)).unwrap();
    let mut config = RunConfig::new("eval");
    config.hyperparameters.epochs = 3;
    let report = run_eval(
        &config,
        LoadedInputs {
            manifest: None,
            input_sha256: Default::default(),
            factors,
            codes,
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    std::fs::write(&path, to_json(&report).unwrap()).unwrap();
    let back = read_metric_report(&path).unwrap();
    assert_eq!(render_markdown(&back).unwrap(), render_markdown(&report).unwrap());
    assert_eq!(to_json(&back).unwrap(), to_json(&report).unwrap());
}
