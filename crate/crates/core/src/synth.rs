//! Synthetic factor/code pairs with planted structure.
//!
//! Factors are sampled over a grid, optional derived factors are computed
//! from seeded lookup tables, and each code dimension mixes centered factor
//! values with Gaussian noise.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    save_code_tensor, save_factor_table, CodeTensor, DatasetManifest, Factor, FactorTable, GridFactor,
    VersionTag, CONTENT, GENDER, MANIFEST_FILE, SPEAKER, STYLE,
};
use crate::error::{Error, Result};
use crate::seed;

pub const FACTORS_FILE: &str = "factors.csv";
pub const SCHEMA_FILE: &str = "schema.json";
pub const CODES_FILE: &str = "codes.dslc";
pub const SPEC_FILE: &str = "generator_spec.json";

/// Number of levels used by [`Nonlinearity::Quantize`].
pub const QUANTIZE_LEVELS: u32 = 8;

/// A factor computed from another through a seeded, balanced lookup table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedFactor {
    pub name: String,
    pub source: String,
    pub cardinality: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Grid-complete when the sample count covers the grid, uniform otherwise.
    #[default]
    Auto,
    GridComplete,
    Uniform,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    None,
    Tanh,
    /// Clamp to [-1, 1] and round to 8 evenly spaced levels.
    Quantize,
}

impl Nonlinearity {
    fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::None => x,
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Quantize => {
                let steps = (QUANTIZE_LEVELS - 1) as f64;
                let level = ((x.clamp(-1.0, 1.0) + 1.0) / 2.0 * steps).round();
                level / steps * 2.0 - 1.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub factor: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DimRecipe {
    #[serde(default)]
    pub components: Vec<Component>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
}

impl DimRecipe {
    pub fn noise(sigma: f64) -> Self {
        Self {
            noise: sigma,
            ..Self::default()
        }
    }

    pub fn of(components: &[(&str, f64)], sigma: f64) -> Self {
        Self {
            components: components
                .iter()
                .map(|&(factor, weight)| Component {
                    factor: factor.to_string(),
                    weight,
                })
                .collect(),
            noise: sigma,
            nonlinearity: Nonlinearity::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    pub version_tag: VersionTag,
    pub grid: Vec<GridFactor>,
    #[serde(default)]
    pub derived: Vec<DerivedFactor>,
    /// Defaults to the grid size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub sampling: Sampling,
    pub seq_len: usize,
    /// One recipe per code dimension.
    pub dims: Vec<DimRecipe>,
    pub seed: u64,
}

fn grid_from(version: VersionTag) -> Vec<GridFactor> {
    version.builtin_grid().expect("built-in version").to_vec()
}

fn gender_factor() -> DerivedFactor {
    DerivedFactor {
        name: GENDER.into(),
        source: SPEAKER.into(),
        cardinality: 2,
        labels: Some(vec!["female".into(), "male".into()]),
    }
}

/// Sixteen dimensions with one dedicated dimension each for style (0),
/// content (2), speaker (3) and gender (4), a weaker style copy (1), weak
/// speaker/content mixtures (5, 7, 9) and pure noise elsewhere.
pub fn planted_layout(sigma: f64) -> Vec<DimRecipe> {
    (0..16)
        .map(|j| match j {
            0 => DimRecipe::of(&[(STYLE, 1.0)], sigma),
            1 => DimRecipe::of(&[(STYLE, 0.5)], sigma),
            2 => DimRecipe::of(&[(CONTENT, 1.0)], sigma),
            3 => DimRecipe::of(&[(SPEAKER, 1.0)], sigma),
            4 => DimRecipe::of(&[(GENDER, 1.0)], sigma),
            5 | 7 | 9 => DimRecipe::of(&[(SPEAKER, 0.2), (CONTENT, 0.2)], sigma),
            _ => DimRecipe::noise(1.0),
        })
        .collect()
}

pub const PRESET_NOISE: f64 = 0.3;
pub const DEFAULT_SEQ_LEN: usize = 256;

impl GeneratorSpec {
    /// Built-in grid for `version`, gender derived from speaker, planted layout.
    pub fn preset(version: VersionTag, seed_value: u64) -> Result<Self> {
        if version == VersionTag::Custom {
            return Err(Error::InvalidConfig("`custom` is not a preset; pass a spec file".into()));
        }
        Ok(Self {
            name: format!("synthetic-{}", version.as_str()),
            version_tag: version,
            grid: grid_from(version),
            derived: vec![gender_factor()],
            n_samples: None,
            sampling: Sampling::Auto,
            seq_len: DEFAULT_SEQ_LEN,
            dims: planted_layout(PRESET_NOISE),
            seed: seed_value,
        })
    }

    /// Planted layout over a custom grid. Components naming factors that are
    /// neither in `grid` nor derivable are dropped; gender is derived from
    /// speaker when the grid has a speaker factor.
    pub fn planted(grid: Vec<GridFactor>, n_samples: usize, seq_len: usize, seed_value: u64) -> Self {
        let derived: Vec<DerivedFactor> = if grid.iter().any(|g| g.name == SPEAKER) {
            vec![gender_factor()]
        } else {
            Vec::new()
        };
        let known = |name: &str| grid.iter().any(|g| g.name == name) || derived.iter().any(|d| d.name == name);
        let dims = planted_layout(PRESET_NOISE)
            .into_iter()
            .map(|mut d| {
                d.components.retain(|c| known(&c.factor));
                d
            })
            .collect();
        Self {
            name: "planted".into(),
            version_tag: VersionTag::Custom,
            grid,
            derived,
            n_samples: Some(n_samples),
            sampling: Sampling::Auto,
            seq_len,
            dims,
            seed: seed_value,
        }
    }

    /// Dimension `j < m` copies factor `j` without noise; the rest is unit noise.
    pub fn identity(grid: Vec<GridFactor>, n_dims: usize, seq_len: usize, n_samples: usize, seed_value: u64) -> Self {
        let dims = (0..n_dims)
            .map(|j| match grid.get(j) {
                Some(g) => DimRecipe::of(&[(g.name.as_str(), 1.0)], 0.0),
                None => DimRecipe::noise(1.0),
            })
            .collect();
        Self {
            name: "identity".into(),
            version_tag: VersionTag::Custom,
            grid,
            derived: Vec::new(),
            n_samples: Some(n_samples),
            sampling: Sampling::Auto,
            seq_len,
            dims,
            seed: seed_value,
        }
    }

    /// Every dimension mixes all grid factors with equal weight.
    pub fn entangled(
        grid: Vec<GridFactor>,
        n_dims: usize,
        seq_len: usize,
        n_samples: usize,
        sigma: f64,
        seed_value: u64,
    ) -> Self {
        let components: Vec<(&str, f64)> = grid.iter().map(|g| (g.name.as_str(), 1.0)).collect();
        let recipe = DimRecipe::of(&components, sigma);
        Self {
            name: "entangled".into(),
            version_tag: VersionTag::Custom,
            dims: vec![recipe; n_dims],
            grid,
            derived: Vec::new(),
            n_samples: Some(n_samples),
            sampling: Sampling::Auto,
            seq_len,
            seed: seed_value,
        }
    }

    /// Two factors, `target` and `nuisance`; every dimension carries the
    /// target plus `alpha` times the nuisance.
    pub fn mixed(
        target: GridFactor,
        nuisance: GridFactor,
        alpha: f64,
        n_dims: usize,
        n_samples: usize,
        sigma: f64,
        seed_value: u64,
    ) -> Self {
        let recipe = DimRecipe::of(&[(target.name.as_str(), 1.0), (nuisance.name.as_str(), alpha)], sigma);
        Self {
            name: format!("mixed-{alpha}"),
            version_tag: VersionTag::Custom,
            grid: vec![target, nuisance],
            derived: Vec::new(),
            n_samples: Some(n_samples),
            sampling: Sampling::Auto,
            seq_len: 1,
            dims: vec![recipe; n_dims],
            seed: seed_value,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::json("generator spec", e))
    }

    pub fn n_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn grid_total(&self) -> u64 {
        self.grid.iter().map(|g| g.cardinality as u64).product()
    }

    pub fn sample_count(&self) -> usize {
        self.n_samples.unwrap_or(self.grid_total() as usize)
    }

    /// Grid factors, then derived factors, in table column order.
    pub fn factor_names(&self) -> Vec<&str> {
        self.grid
            .iter()
            .map(|g| g.name.as_str())
            .chain(self.derived.iter().map(|d| d.name.as_str()))
            .collect()
    }

    fn cardinality_of(&self, name: &str) -> Option<u32> {
        self.grid
            .iter()
            .find(|g| g.name == name)
            .map(|g| g.cardinality)
            .or_else(|| self.derived.iter().find(|d| d.name == name).map(|d| d.cardinality))
    }

    fn grid_complete(&self) -> Result<bool> {
        let covers = self.sample_count() as u64 >= self.grid_total();
        match self.sampling {
            Sampling::Auto => Ok(covers),
            Sampling::Uniform => Ok(false),
            Sampling::GridComplete if covers => Ok(true),
            Sampling::GridComplete => Err(Error::InvalidConfig(format!(
                "grid-complete sampling needs at least {} samples, {} requested",
                self.grid_total(),
                self.sample_count()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.grid.is_empty() {
            return bad("generator grid is empty".into());
        }
        if self.dims.is_empty() || self.seq_len == 0 || self.sample_count() == 0 {
            return bad("generator needs at least one dimension, time step and sample".into());
        }
        if let Some(tag_grid) = self.version_tag.builtin_grid() {
            if self.grid != tag_grid {
                return bad(format!("grid does not match the built-in `{}` grid", self.version_tag.as_str()));
            }
        }
        let names = self.factor_names();
        if names.iter().collect::<BTreeSet<_>>().len() != names.len() || names.iter().any(|n| n.is_empty()) {
            return bad("factor names must be unique and non-empty".into());
        }
        if self.grid.iter().any(|g| g.cardinality == 0) {
            return bad("grid cardinalities must be at least 1".into());
        }
        for d in &self.derived {
            if d.cardinality == 0 || !self.grid.iter().any(|g| g.name == d.source) {
                return bad(format!("derived factor `{}` needs a grid source and cardinality >= 1", d.name));
            }
            if d.labels.as_ref().is_some_and(|l| l.len() != d.cardinality as usize) {
                return bad(format!("derived factor `{}`: label count differs from cardinality", d.name));
            }
        }
        for (j, dim) in self.dims.iter().enumerate() {
            if !(dim.noise.is_finite() && dim.noise >= 0.0) {
                return bad(format!("dimension {j}: noise must be finite and non-negative"));
            }
            for c in &dim.components {
                if !c.weight.is_finite() {
                    return bad(format!("dimension {j}: weight for `{}` is not finite", c.factor));
                }
                if self.cardinality_of(&c.factor).is_none() {
                    return bad(format!("dimension {j}: unknown factor `{}`", c.factor));
                }
            }
        }
        self.grid_complete().map(|_| ())
    }
}

/// Maps a factor index onto [-1, 1]; single-valued factors map to 0.
pub fn center(value: u32, cardinality: u32) -> f64 {
    if cardinality <= 1 {
        0.0
    } else {
        2.0 * value as f64 / (cardinality - 1) as f64 - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimExpectation {
    pub dimension: usize,
    /// Factors with the largest absolute weight; empty for noise dimensions.
    pub dominant_factors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorExpectation {
    pub factor: String,
    /// Analytic MIG target where the construction fixes it.
    pub expected_mig: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub dims: Vec<DimExpectation>,
    pub factors: Vec<FactorExpectation>,
}

fn oracle_report(spec: &GeneratorSpec) -> OracleReport {
    let dims = spec
        .dims
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let top = d.components.iter().map(|c| c.weight.abs()).fold(0.0, f64::max);
            DimExpectation {
                dimension: j,
                dominant_factors: d
                    .components
                    .iter()
                    .filter(|c| top > 0.0 && c.weight.abs() == top)
                    .map(|c| c.factor.clone())
                    .collect(),
            }
        })
        .collect();

    // Factors tied to `name` through a derivation share information with it.
    let related = |name: &str| -> BTreeSet<String> {
        let mut set = BTreeSet::from([name.to_string()]);
        for d in &spec.derived {
            if d.name == name {
                set.insert(d.source.clone());
            }
            if d.source == name {
                set.insert(d.name.clone());
            }
        }
        set
    };
    let uses = |d: &DimRecipe, names: &BTreeSet<String>| {
        d.components.iter().any(|c| c.weight != 0.0 && names.contains(&c.factor))
    };
    let all_equal = spec.dims.windows(2).all(|w| w[0] == w[1]);

    let factors = spec
        .factor_names()
        .into_iter()
        .map(|name| {
            let card = spec.cardinality_of(name).unwrap_or(1);
            let rel = related(name);
            let carriers: Vec<&DimRecipe> = spec.dims.iter().filter(|d| uses(d, &rel)).collect();
            let expected_mig = if card <= 1 {
                None
            } else if spec.dims.len() >= 2 && all_equal && !carriers.is_empty() {
                Some(0.0)
            } else if carriers.len() == 1
                && carriers[0].noise == 0.0
                && carriers[0].components.iter().all(|c| c.factor == name || c.weight == 0.0)
            {
                Some(1.0)
            } else {
                None
            };
            FactorExpectation {
                factor: name.to_string(),
                expected_mig,
            }
        })
        .collect();
    OracleReport { dims, factors }
}

/// Grid cell indices for every sample.
fn sample_cells(spec: &GeneratorSpec, rng: &mut impl Rng) -> Result<Vec<u64>> {
    let n = spec.sample_count();
    let total = spec.grid_total();
    let mut cells: Vec<u64> = if spec.grid_complete()? {
        let mut cells: Vec<u64> = (0..n as u64).map(|i| i % total).collect();
        let remainder = n as u64 % total;
        if remainder > 0 {
            // The partial final pass covers distinct random cells.
            let extra = rand::seq::index::sample(rng, total as usize, remainder as usize);
            let start = n - remainder as usize;
            for (slot, cell) in cells[start..].iter_mut().zip(extra.iter()) {
                *slot = cell as u64;
            }
        }
        cells
    } else {
        (0..n).map(|_| rng.gen_range(0..total)).collect()
    };
    cells.shuffle(rng);
    Ok(cells)
}

/// Generates the factor table and code tensor described by `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<(FactorTable, CodeTensor, OracleReport)> {
    spec.validate()?;
    let n = spec.sample_count();
    let mut factor_rng = seed::rng(seed::derive(spec.seed, &[seed::STREAM_SYNTH_FACTORS]));
    let cells = sample_cells(spec, &mut factor_rng)?;

    // Row-major decomposition: the last grid factor varies fastest.
    let mut columns: Vec<Vec<u32>> = vec![Vec::with_capacity(n); spec.grid.len()];
    for &cell in &cells {
        let mut rest = cell;
        for (k, g) in spec.grid.iter().enumerate().rev() {
            columns[k].push((rest % g.cardinality as u64) as u32);
            rest /= g.cardinality as u64;
        }
    }
    let mut factors: Vec<Factor> = spec
        .grid
        .iter()
        .zip(columns)
        .map(|(g, col)| Factor::categorical(&g.name, col, g.cardinality))
        .collect::<Result<_>>()?;

    for (k, d) in spec.derived.iter().enumerate() {
        let source = spec.grid.iter().position(|g| g.name == d.source).expect("validated");
        let source_card = spec.grid[source].cardinality;
        let mut table: Vec<u32> = (0..source_card).map(|v| v % d.cardinality).collect();
        table.shuffle(&mut seed::rng(seed::derive(spec.seed, &[seed::STREAM_SYNTH_DERIVED, k as u64])));
        let col = factors[source].codes()?.iter().map(|&v| table[v as usize]).collect();
        let mut factor = Factor::categorical(&d.name, col, d.cardinality)?;
        if let Some(labels) = &d.labels {
            factor = factor.with_labels(labels.clone())?;
        }
        factors.push(factor);
    }
    let table = FactorTable::new(factors)?;

    let resolved: Vec<Vec<(usize, u32, f64)>> = spec
        .dims
        .iter()
        .map(|d| {
            d.components
                .iter()
                .map(|c| {
                    let idx = table.index_of(&c.factor).expect("validated");
                    (idx, table.factor(idx).cardinality().unwrap_or(1), c.weight)
                })
                .collect()
        })
        .collect();

    let (d, t) = (spec.n_dims(), spec.seq_len);
    let mut noise_rng = seed::rng(seed::derive(spec.seed, &[seed::STREAM_SYNTH_NOISE]));
    let mut values = Vec::with_capacity(n * d * t);
    let cols: Vec<&[u32]> = (0..table.n_factors()).map(|k| table.column(k)).collect::<Result<_>>()?;
    for i in 0..n {
        for (recipe, comps) in spec.dims.iter().zip(&resolved) {
            let signal: f64 = comps.iter().map(|&(k, card, w)| w * center(cols[k][i], card)).sum();
            for _ in 0..t {
                let eta: f64 = if recipe.noise > 0.0 {
                    StandardNormal.sample(&mut noise_rng)
                } else {
                    0.0
                };
                values.push(recipe.nonlinearity.apply(signal + recipe.noise * eta) as f32);
            }
        }
    }
    let codes = CodeTensor::from_vec(n, d, t, values)?;
    Ok((table, codes, oracle_report(spec)))
}

/// Generates `spec` into `out_dir` and writes the manifest. Returns the manifest.
pub fn write_dataset(spec: &GeneratorSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (table, codes, _) = generate(spec)?;
    save_factor_table(&table, out.join(FACTORS_FILE))?;
    table.ingestion_config().save(out.join(SCHEMA_FILE))?;
    save_code_tensor(&codes, out.join(CODES_FILE))?;
    let spec_json = spec.to_json()?;
    let spec_path = out.join(SPEC_FILE);
    std::fs::write(&spec_path, &spec_json).map_err(|e| Error::io(&spec_path, e))?;

    let manifest = DatasetManifest {
        name: spec.name.clone(),
        version_tag: spec.version_tag,
        factor_grid: spec.grid.clone(),
        total_utterances: spec.sample_count() as u64,
        grid_complete: spec.grid_complete()? && spec.sample_count() as u64 == spec.grid_total(),
        factor_table: FACTORS_FILE.into(),
        factor_schema: Some(SCHEMA_FILE.into()),
        code_tensor: CODES_FILE.into(),
        seed: Some(spec.seed),
        generator_spec_sha256: Some(hex::encode(Sha256::digest(spec_json.as_bytes()))),
    };
    manifest.validate()?;
    manifest.save(out.join(MANIFEST_FILE))?;
    Ok(manifest)
}
