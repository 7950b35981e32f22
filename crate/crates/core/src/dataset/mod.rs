//! Core data types: factor tables, code tensors, manifests and their pairing.

mod codes;
mod factors;
mod manifest;

pub use codes::{load_code_tensor, save_code_tensor, CodeTensor, FORMAT_VERSION, HEADER_LEN, MAGIC};
pub use factors::{
    load_factor_table, save_factor_table, ColumnKind, ColumnSchema, Factor, FactorData,
    FactorTable, IngestionConfig,
};
pub use manifest::{
    manifest_path, DatasetManifest, GridFactor, VersionTag, CONTENT, GENDER, MANIFEST_FILE,
    SPEAKER, STYLE,
};

use std::path::Path;

use crate::error::{Error, Result};

/// A factor table and code tensor known to describe the same samples.
///
/// Metric operations only accept this handle.
#[derive(Debug, Clone)]
pub struct PairedDataset {
    factors: FactorTable,
    codes: CodeTensor,
}

/// Pairs a factor table with a code tensor; sample counts must agree and be non-zero.
///
/// Code tensors cannot have a zero-sized axis, so an empty factor table is
/// reported as an empty dataset before counts are compared.
pub fn validate_pairing(factors: FactorTable, codes: CodeTensor) -> Result<PairedDataset> {
    if factors.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    if factors.n_samples() != codes.n_samples() {
        return Err(Error::SampleCountMismatch {
            factors: factors.n_samples(),
            codes: codes.n_samples(),
        });
    }
    Ok(PairedDataset { factors, codes })
}

impl PairedDataset {
    pub fn factors(&self) -> &FactorTable {
        &self.factors
    }

    pub fn codes(&self) -> &CodeTensor {
        &self.codes
    }

    pub fn n_samples(&self) -> usize {
        self.factors.n_samples()
    }

    pub fn into_parts(self) -> (FactorTable, CodeTensor) {
        (self.factors, self.codes)
    }
}

/// Loads the factor table and code tensor a manifest points at.
pub fn load_manifest_dataset(
    manifest_or_dir: impl AsRef<Path>,
) -> Result<(DatasetManifest, FactorTable, CodeTensor)> {
    let path = manifest_path(manifest_or_dir.as_ref());
    let manifest = DatasetManifest::load(&path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let schema = match &manifest.factor_schema {
        Some(p) => IngestionConfig::load(base.join(p))?,
        None => IngestionConfig::default(),
    };
    let factors = load_factor_table(base.join(&manifest.factor_table), &schema)?;
    let codes = load_code_tensor(base.join(&manifest.code_tensor))?;
    Ok((manifest, factors, codes))
}
