use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VersionTag {
    Small,
    Medium,
    Large,
    Custom,
}

impl VersionTag {
    /// Built-in (speakers, contents, styles) grids of the released dataset versions.
    pub fn builtin_grid(self) -> Option<[GridFactor; 3]> {
        let (speakers, contents, styles) = match self {
            VersionTag::Small => (50, 500, 1),
            VersionTag::Medium => (25, 500, 4),
            VersionTag::Large => (249, 110, 4),
            VersionTag::Custom => return None,
        };
        Some([
            GridFactor::new(SPEAKER, speakers),
            GridFactor::new(CONTENT, contents),
            GridFactor::new(STYLE, styles),
        ])
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VersionTag::Small => "small",
            VersionTag::Medium => "medium",
            VersionTag::Large => "large",
            VersionTag::Custom => "custom",
        }
    }
}

impl std::str::FromStr for VersionTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            "large" => Ok(Self::Large),
            "custom" => Ok(Self::Custom),
            other => Err(Error::InvalidConfig(format!("unknown version tag `{other}`"))),
        }
    }
}

pub const SPEAKER: &str = "speaker_id";
pub const CONTENT: &str = "content";
pub const STYLE: &str = "style";
pub const GENDER: &str = "gender";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFactor {
    pub name: String,
    pub cardinality: u32,
}

impl GridFactor {
    pub fn new(name: &str, cardinality: u32) -> Self {
        Self {
            name: name.to_string(),
            cardinality,
        }
    }
}

/// Describes a dataset directory. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub version_tag: VersionTag,
    pub factor_grid: Vec<GridFactor>,
    pub total_utterances: u64,
    pub grid_complete: bool,
    pub factor_table: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_schema: Option<PathBuf>,
    pub code_tensor: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_spec_sha256: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl DatasetManifest {
    pub fn grid_total(&self) -> u64 {
        self.factor_grid
            .iter()
            .map(|g| g.cardinality as u64)
            .product()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(expected) = self.version_tag.builtin_grid() {
            if self.factor_grid != expected {
                return Err(Error::InvalidDataset(format!(
                    "manifest `{}`: factor grid does not match the built-in `{}` grid",
                    self.name,
                    self.version_tag.as_str()
                )));
            }
        }
        if self.factor_grid.iter().any(|g| g.cardinality == 0) {
            return Err(Error::InvalidDataset("zero cardinality in factor grid".into()));
        }
        if self.grid_complete && self.total_utterances != self.grid_total() {
            return Err(Error::InvalidDataset(format!(
                "manifest `{}`: total_utterances {} differs from grid product {}",
                self.name,
                self.total_utterances,
                self.grid_total()
            )));
        }
        Ok(())
    }

    /// Reads and validates a manifest; `path` may be the file or its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_path(path.as_ref());
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Self =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("manifest", e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}
