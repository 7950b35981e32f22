//! Latent code tensors and the `DSLC` binary format.
//!
//! Layout (little-endian): magic `DSLC`, `u32` version (= 1), `u64` N,
//! `u32` d, `u32` T, then `N·d·T` `f32` values in (sample, dim, time) order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array3, ArrayView2};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"DSLC";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 24;

/// `N × d × T` continuous latent codes; always finite, standard layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeTensor {
    values: Array3<f32>,
}

impl CodeTensor {
    pub fn new(values: Array3<f32>) -> Result<Self> {
        let (n, d, t) = values.dim();
        if n == 0 || d == 0 || t == 0 {
            return Err(Error::ZeroSizedAxis { n, d, t });
        }
        if let Some(((i, j, k), &v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: v as f64,
                location: format!("sample {i}, dim {j}, step {k}"),
            });
        }
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        Ok(Self { values })
    }

    pub fn from_vec(n: usize, d: usize, t: usize, values: Vec<f32>) -> Result<Self> {
        let arr = Array3::from_shape_vec((n, d, t), values).map_err(|e| {
            Error::InvalidDataset(format!("shape ({n}, {d}, {t}) does not fit data: {e}"))
        })?;
        Self::new(arr)
    }

    pub fn n_samples(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_dims(&self) -> usize {
        self.values.dim().1
    }

    pub fn seq_len(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> &Array3<f32> {
        &self.values
    }

    fn flat(&self) -> &[f32] {
        self.values
            .as_slice()
            .expect("code tensor is kept in standard layout")
    }

    /// Time series of dimension `dim` for `sample`.
    pub fn series(&self, sample: usize, dim: usize) -> &[f32] {
        let t = self.seq_len();
        let start = (sample * self.n_dims() + dim) * t;
        &self.flat()[start..start + t]
    }

    /// All `d·T` values of `sample`, dimension-major.
    pub fn sample(&self, sample: usize) -> &[f32] {
        let len = self.n_dims() * self.seq_len();
        &self.flat()[sample * len..(sample + 1) * len]
    }

    pub fn sample_view(&self, sample: usize) -> ArrayView2<'_, f32> {
        self.values.index_axis(ndarray::Axis(0), sample)
    }
}

/// Reads a code tensor. Paths ending in `.csv` use the CSV fallback
/// (one sample per row, one dimension per column, `T = 1`); everything else
/// must be in the binary format.
pub fn load_code_tensor(path: impl AsRef<Path>) -> Result<CodeTensor> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        load_csv(path)
    } else {
        load_binary(path)
    }
}

fn load_binary(path: &Path) -> Result<CodeTensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut reader = BufReader::with_capacity(1 << 20, file);

    if file_len < HEADER_LEN {
        let mut head = [0u8; 4];
        let got = reader.read(&mut head).map_err(|e| Error::io(path, e))?;
        if got == 4 && head != MAGIC {
            return Err(Error::BadMagic { found: head });
        }
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            found: file_len,
        });
    }
    let mut header = [0u8; HEADER_LEN as usize];
    reader
        .read_exact(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let d = u32::from_le_bytes(header[16..20].try_into().unwrap()) as u64;
    let t = u32::from_le_bytes(header[20..24].try_into().unwrap()) as u64;
    if n == 0 || d == 0 || t == 0 {
        return Err(Error::ZeroSizedAxis {
            n: n as usize,
            d: d as usize,
            t: t as usize,
        });
    }
    let count = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(t))
        .filter(|c| c.checked_mul(4).is_some())
        .ok_or_else(|| Error::InvalidDataset(format!("shape ({n}, {d}, {t}) overflows")))?;
    let expected = count * 4;
    let found = file_len - HEADER_LEN;
    if found < expected {
        return Err(Error::TruncatedPayload { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { expected, found });
    }

    let mut values = Vec::with_capacity(count as usize);
    let mut chunk = vec![0u8; 1 << 16];
    let mut remaining = expected as usize;
    while remaining > 0 {
        let take = remaining.min(chunk.len());
        reader
            .read_exact(&mut chunk[..take])
            .map_err(|e| Error::io(path, e))?;
        values.extend(
            chunk[..take]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
        );
        remaining -= take;
    }
    CodeTensor::from_vec(n as usize, d as usize, t as usize, values)
}

fn load_csv(path: &Path) -> Result<CodeTensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let parsed: Option<Vec<f64>> = record.iter().map(|s| s.parse().ok()).collect();
        let parsed = match parsed {
            Some(p) => p,
            // A non-numeric first line is a header.
            None if line == 0 => {
                width = Some(record.len());
                continue;
            }
            None => {
                return Err(Error::InvalidDataset(format!(
                    "{}: row {} is not numeric",
                    path.display(),
                    line + 1
                )))
            }
        };
        let expected = *width.get_or_insert(parsed.len());
        if parsed.len() != expected {
            return Err(Error::RaggedRow {
                row: line + 1,
                expected,
                found: parsed.len(),
            });
        }
        for (col, v) in parsed.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    value: v,
                    location: format!("row {}, column {col}", line + 1),
                });
            }
            values.push(v as f32);
        }
        rows += 1;
    }
    CodeTensor::from_vec(rows, width.unwrap_or(0), 1, values)
}

/// Writes `codes` in the binary format.
pub fn save_code_tensor(codes: &CodeTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let io = |e| Error::io(path, e);
    w.write_all(&MAGIC).map_err(io)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(codes.n_samples() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(codes.n_dims() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(codes.seq_len() as u32).to_le_bytes()).map_err(io)?;
    for v in codes.flat() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}
