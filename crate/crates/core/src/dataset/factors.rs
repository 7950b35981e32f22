//! Ground-truth factor tables and their CSV ingestion.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values held by one factor column.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorData {
    /// Integer category indices in `[0, cardinality)`.
    Categorical {
        codes: Vec<u32>,
        cardinality: u32,
        labels: Option<Vec<String>>,
        /// Raw reals this column was discretized from, if any.
        source: Option<Vec<f64>>,
    },
    /// Raw reals awaiting discretization.
    Continuous { raw: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    name: String,
    data: FactorData,
}

impl Factor {
    /// A categorical column; `cardinality` must exceed every code.
    pub fn categorical(name: impl Into<String>, codes: Vec<u32>, cardinality: u32) -> Result<Self> {
        let name = name.into();
        check_codes(&name, &codes, cardinality)?;
        Ok(Self {
            name,
            data: FactorData::Categorical {
                codes,
                cardinality,
                labels: None,
                source: None,
            },
        })
    }

    /// A categorical column with cardinality taken from the largest code.
    pub fn from_codes(name: impl Into<String>, codes: Vec<u32>) -> Result<Self> {
        let cardinality = codes.iter().max().map_or(1, |&m| m + 1);
        Self::categorical(name, codes, cardinality)
    }

    pub fn continuous(name: impl Into<String>, raw: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if let Some((i, &v)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: v,
                location: format!("factor `{name}`, row {i}"),
            });
        }
        Ok(Self {
            name,
            data: FactorData::Continuous { raw },
        })
    }

    /// Attaches an index → label table. Its length becomes a lower bound on
    /// the cardinality.
    pub fn with_labels(mut self, new_labels: Vec<String>) -> Result<Self> {
        match &mut self.data {
            FactorData::Categorical {
                cardinality,
                labels,
                ..
            } => {
                *cardinality = (*cardinality).max(new_labels.len() as u32);
                *labels = Some(new_labels);
                Ok(self)
            }
            FactorData::Continuous { .. } => Err(Error::InvalidDataset(format!(
                "labels given for continuous factor `{}`",
                self.name
            ))),
        }
    }

    pub(crate) fn with_source(mut self, raw: Vec<f64>) -> Self {
        if let FactorData::Categorical { source, .. } = &mut self.data {
            *source = Some(raw);
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn data(&self) -> &FactorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        match &self.data {
            FactorData::Categorical { codes, .. } => codes.len(),
            FactorData::Continuous { raw } => raw.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.data, FactorData::Continuous { .. })
    }

    /// Category indices; errors for a continuous column that has not been discretized.
    pub fn codes(&self) -> Result<&[u32]> {
        match &self.data {
            FactorData::Categorical { codes, .. } => Ok(codes),
            FactorData::Continuous { .. } => Err(Error::NotDiscretized(self.name.clone())),
        }
    }

    pub fn cardinality(&self) -> Option<u32> {
        match &self.data {
            FactorData::Categorical { cardinality, .. } => Some(*cardinality),
            FactorData::Continuous { .. } => None,
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        match &self.data {
            FactorData::Categorical { labels, .. } => labels.as_deref(),
            FactorData::Continuous { .. } => None,
        }
    }

    /// Raw reals: the continuous column itself, or the source of a discretized one.
    pub fn continuous_source(&self) -> Option<&[f64]> {
        match &self.data {
            FactorData::Categorical { source, .. } => source.as_deref(),
            FactorData::Continuous { raw } => Some(raw),
        }
    }
}

fn check_codes(name: &str, codes: &[u32], cardinality: u32) -> Result<()> {
    if cardinality == 0 {
        return Err(Error::InvalidDataset(format!(
            "factor `{name}` has cardinality 0"
        )));
    }
    if let Some(&max_index) = codes.iter().max() {
        if max_index >= cardinality {
            return Err(Error::CardinalityTooSmall {
                factor: name.to_string(),
                declared: cardinality,
                max_index,
            });
        }
    }
    Ok(())
}

/// `N × m` table of generative-factor realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    n_samples: usize,
    factors: Vec<Factor>,
}

impl FactorTable {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::InvalidDataset("factor table has no columns".into()))?;
        let n_samples = first.len();
        let mut seen = std::collections::HashSet::new();
        for f in &factors {
            if f.name.trim().is_empty() {
                return Err(Error::InvalidDataset("empty factor name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate factor name `{}`",
                    f.name
                )));
            }
            if f.len() != n_samples {
                return Err(Error::InvalidDataset(format!(
                    "factor `{}` has {} rows, expected {n_samples}",
                    f.name,
                    f.len()
                )));
            }
        }
        Ok(Self { n_samples, factors })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, index: usize) -> &Factor {
        &self.factors[index]
    }

    pub fn names(&self) -> Vec<&str> {
        self.factors.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFactor(name.to_string()))
    }

    /// Category indices of factor `index`.
    pub fn column(&self, index: usize) -> Result<&[u32]> {
        self.factors[index].codes()
    }

    /// Replaces factor `index` in place; the replacement must keep the row count.
    pub fn replace_factor(&mut self, index: usize, factor: Factor) -> Result<()> {
        if factor.len() != self.n_samples {
            return Err(Error::LengthMismatch {
                left: factor.len(),
                right: self.n_samples,
            });
        }
        self.factors[index] = factor;
        Ok(())
    }

    /// Schema that reproduces this table when passed to [`load_factor_table`].
    pub fn ingestion_config(&self) -> IngestionConfig {
        let columns = self
            .factors
            .iter()
            .map(|f| {
                let schema = match &f.data {
                    FactorData::Categorical {
                        cardinality,
                        labels,
                        ..
                    } => ColumnSchema {
                        kind: ColumnKind::Categorical,
                        cardinality: Some(*cardinality),
                        labels: labels.clone(),
                    },
                    FactorData::Continuous { .. } => ColumnSchema {
                        kind: ColumnKind::Continuous,
                        cardinality: None,
                        labels: None,
                    },
                };
                (f.name.clone(), schema)
            })
            .collect();
        IngestionConfig { columns }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// Non-negative integers become indices, other reals continuous, anything else labels.
    #[default]
    Auto,
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    #[serde(default)]
    pub kind: ColumnKind,
    /// Overrides the observed cardinality; must exceed every index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<u32>,
    /// Fixed index → label table. Values are then read as labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// Per-column declarations for factor CSV ingestion. Columns not listed are `auto`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestionConfig {
    #[serde(default)]
    pub columns: BTreeMap<String, ColumnSchema>,
}

impl IngestionConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("schema", e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Reads a factor CSV (UTF-8, header row, comma-separated).
///
/// Label columns get dense indices in first-occurrence order unless the schema
/// fixes a label table. Continuous columns are stored raw.
pub fn load_factor_table(path: impl AsRef<Path>, schema: &IngestionConfig) -> Result<FactorTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row: row + 1,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            col.push(field.to_string());
        }
    }

    let default_schema = ColumnSchema::default();
    let factors = header
        .iter()
        .zip(columns)
        .map(|(name, fields)| {
            let schema = schema.columns.get(name).unwrap_or(&default_schema);
            parse_column(name, fields, schema)
        })
        .collect::<Result<Vec<_>>>()?;
    FactorTable::new(factors)
}

fn parse_column(name: &str, fields: Vec<String>, schema: &ColumnSchema) -> Result<Factor> {
    if let Some(labels) = &schema.labels {
        return labelled_column(name, &fields, labels, schema.cardinality);
    }
    let as_indices = || fields.iter().map(|s| s.parse::<u32>().ok()).collect::<Option<Vec<_>>>();
    let kind = match schema.kind {
        ColumnKind::Auto => {
            if as_indices().is_some() {
                ColumnKind::Categorical
            } else if fields.iter().all(|s| s.parse::<f64>().is_ok()) {
                ColumnKind::Continuous
            } else {
                ColumnKind::Categorical
            }
        }
        k => k,
    };
    match kind {
        ColumnKind::Continuous => {
            let raw = fields
                .iter()
                .enumerate()
                .map(|(row, s)| {
                    s.parse::<f64>().map_err(|_| {
                        Error::InvalidDataset(format!(
                            "factor `{name}`, row {}: `{s}` is not a real number",
                            row + 1
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Factor::continuous(name, raw)
        }
        _ => match as_indices() {
            Some(codes) => {
                let observed = codes.iter().max().map_or(1, |&m| m + 1);
                Factor::categorical(name, codes, schema.cardinality.unwrap_or(observed))
            }
            None => {
                let mut index: HashMap<&str, u32> = HashMap::new();
                let mut labels = Vec::new();
                let codes = fields
                    .iter()
                    .map(|s| {
                        *index.entry(s.as_str()).or_insert_with(|| {
                            labels.push(s.clone());
                            labels.len() as u32 - 1
                        })
                    })
                    .collect();
                let observed = labels.len() as u32;
                Factor::categorical(name, codes, schema.cardinality.unwrap_or(observed))?
                    .with_labels(labels)
            }
        },
    }
}

fn labelled_column(
    name: &str,
    fields: &[String],
    labels: &[String],
    cardinality: Option<u32>,
) -> Result<Factor> {
    let index: HashMap<&str, u32> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as u32))
        .collect();
    let codes = fields
        .iter()
        .enumerate()
        .map(|(row, s)| {
            index.get(s.as_str()).copied().ok_or_else(|| {
                Error::InvalidDataset(format!(
                    "factor `{name}`, row {}: label `{s}` not in the declared label table",
                    row + 1
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Factor::categorical(name, codes, cardinality.unwrap_or(labels.len() as u32))?
        .with_labels(labels.to_vec())
}

/// Writes the table as CSV. Labelled columns are written as labels,
/// discretized continuous columns as their indices, and raw reals with
/// shortest round-trip formatting.
pub fn save_factor_table(table: &FactorTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer.write_record(table.names()).map_err(csv_err)?;
    let mut record = Vec::with_capacity(table.n_factors());
    for row in 0..table.n_samples() {
        record.clear();
        for f in table.factors() {
            record.push(match &f.data {
                FactorData::Categorical {
                    codes,
                    labels: Some(labels),
                    ..
                } => labels[codes[row] as usize].clone(),
                FactorData::Categorical { codes, .. } => codes[row].to_string(),
                FactorData::Continuous { raw } => raw[row].to_string(),
            });
        }
        writer.write_record(&record).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(contents.as_bytes()).unwrap();
        file
    }

    #[test]
    fn string_categories_use_first_occurrence_order() {
        let file = write_csv("speaker_gender\nmale\nfemale\nmale\n");
        let table = load_factor_table(file.path(), &IngestionConfig::default()).unwrap();
        assert_eq!(table.column(0).unwrap(), &[0, 1, 0]);
        assert_eq!(table.factor(0).cardinality(), Some(2));
        assert_eq!(
            table.factor(0).labels().unwrap(),
            &["male".to_string(), "female".to_string()]
        );
    }

    #[test]
    fn integer_column_cardinality_is_observed() {
        let body: String = (0..100).map(|i| format!("{}\n", i % 25)).collect();
        let file = write_csv(&format!("speaker_id\n{body}"));
        let table = load_factor_table(file.path(), &IngestionConfig::default()).unwrap();
        assert_eq!(table.factor(0).cardinality(), Some(25));
    }

    #[test]
    fn continuous_column_is_kept_raw() {
        let file = write_csv("rms_amplitude\n0.1\n0.9\n0.5\n");
        let table = load_factor_table(file.path(), &IngestionConfig::default()).unwrap();
        let f = table.factor(0);
        assert!(f.is_continuous());
        assert_eq!(f.continuous_source().unwrap(), &[0.1, 0.9, 0.5]);
        assert_eq!(f.cardinality(), None);
        assert!(matches!(table.column(0), Err(Error::NotDiscretized(_))));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let file = write_csv("a,b\n0,1\n1\n");
        let err = load_factor_table(file.path(), &IngestionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 2, expected: 2, found: 1 }));
    }

    #[test]
    fn non_finite_continuous_is_rejected() {
        let file = write_csv("loudness\n0.5\nNaN\n");
        let err = load_factor_table(file.path(), &IngestionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    }

    #[test]
    fn declared_cardinality_below_max_index_is_rejected() {
        let file = write_csv("style\n0\n3\n");
        let mut schema = IngestionConfig::default();
        schema.columns.insert(
            "style".into(),
            ColumnSchema {
                kind: ColumnKind::Categorical,
                cardinality: Some(3),
                labels: None,
            },
        );
        let err = load_factor_table(file.path(), &schema).unwrap_err();
        assert!(matches!(
            err,
            Error::CardinalityTooSmall { declared: 3, max_index: 3, .. }
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_factor_table("/nonexistent/factors.csv", &IngestionConfig::default())
            .unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn declared_continuous_rejects_text() {
        let file = write_csv("x\n0.5\nloud\n");
        let mut schema = IngestionConfig::default();
        schema.columns.insert(
            "x".into(),
            ColumnSchema {
                kind: ColumnKind::Continuous,
                ..Default::default()
            },
        );
        assert!(load_factor_table(file.path(), &schema).is_err());
    }

    #[test]
    fn table_invariants() {
        assert!(FactorTable::new(vec![]).is_err());
        let a = Factor::from_codes("a", vec![0, 1]).unwrap();
        let dup = Factor::from_codes("a", vec![1, 0]).unwrap();
        assert!(FactorTable::new(vec![a.clone(), dup]).is_err());
        let short = Factor::from_codes("b", vec![0]).unwrap();
        assert!(FactorTable::new(vec![a.clone(), short]).is_err());
        assert!(Factor::from_codes(" ", vec![0]).and_then(|f| FactorTable::new(vec![f])).is_err());
        assert!(Factor::categorical("c", vec![0], 0).is_err());
    }

    #[test]
    fn save_then_load_with_schema_round_trips() {
        let labelled = Factor::categorical("gender", vec![1, 0, 1], 2)
            .unwrap()
            .with_labels(vec!["female".into(), "male".into()])
            .unwrap();
        let idx = Factor::categorical("speaker", vec![4, 0, 2], 7).unwrap();
        let cont = Factor::continuous("rms", vec![0.1, 1.0 / 3.0, 2.5e-17]).unwrap();
        let table = FactorTable::new(vec![labelled, idx, cont]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        save_factor_table(&table, &path).unwrap();
        let back = load_factor_table(&path, &table.ingestion_config()).unwrap();
        assert_eq!(back, table);
    }
}
