use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// [`Error::is_io`] separates I/O failures from validation failures so the
/// command-line front end can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("bad magic: expected \"DSLC\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported code tensor version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },

    #[error("zero-sized axis in shape ({n}, {d}, {t})")]
    ZeroSizedAxis { n: usize, d: usize, t: usize },

    #[error("non-finite value {value} at {location}")]
    NonFinite { value: f64, location: String },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("sample-count mismatch: factor table has {factors} samples, code tensor has {codes}")]
    SampleCountMismatch { factors: usize, codes: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("factor `{factor}`: declared cardinality {declared} is smaller than observed max index {max_index}")]
    CardinalityTooSmall {
        factor: String,
        declared: u32,
        max_index: u32,
    },

    #[error("value {value} out of range [0, {bins}) at position {position}")]
    BinOutOfRange {
        value: u32,
        bins: u32,
        position: usize,
    },

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("factor `{0}` is continuous and has not been discretized")]
    NotDiscretized(String),

    #[error("factor `{0}` has zero entropy; metric undefined")]
    ZeroEntropy(String),

    #[error("at least {required} code dimensions required, found {found}")]
    TooFewDimensions { required: usize, found: usize },

    #[error("factor `{0}` has no nuisance variation")]
    NoNuisanceVariation(String),

    #[error("empty dimension subset")]
    EmptyDimensionSubset,

    #[error("labels contain a single class; at least two are required")]
    SingleClass,

    #[error("class {class} missing from the {split} split after resplitting")]
    ClassMissingFromSplit { class: u32, split: &'static str },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch} (last finite loss {last_finite})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        last_finite: f64,
    },

    #[error("degenerate class composition: {positives} positives, {negatives} negatives")]
    DegenerateClasses { positives: usize, negatives: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{module} for factor `{factor}`: {source}")]
    Metric {
        module: &'static str,
        factor: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Attributes a failure to a metric module and factor.
    pub fn in_metric(self, module: &'static str, factor: &str) -> Self {
        Error::Metric {
            module,
            factor: factor.to_string(),
            source: Box::new(self),
        }
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv { source, .. } => source.is_io_error(),
            Error::Metric { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
