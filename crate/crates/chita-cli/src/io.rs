//! Bit-exact file containers.
//!
//! Binary layouts (all integers little-endian):
//!
//! ```text
//! matrix:  "CHITAMTX" | u32 version=1 | u8 dtype | 3 zero bytes | u64 n | u64 p | n*p values row-major
//! vector:  "CHITAVEC" | u32 version=1 | u8 dtype | 3 zero bytes | u64 len       | len values
//! ```
//!
//! dtype 1 is float32, dtype 2 is float64. Writers always emit float64;
//! readers widen float32 payloads. The three JSON files (layer map, sparse
//! solution, run config) are UTF-8 with a fixed key order so that a
//! write-read-write cycle reproduces the bytes exactly.
//!
//! Every parse failure reports the byte offset of the first violation.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MATRIX_MAGIC: &[u8; 8] = b"CHITAMTX";
pub const VECTOR_MAGIC: &[u8; 8] = b"CHITAVEC";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;
pub const DTYPE_F64: u8 = 2;

const MATRIX_HEADER: usize = 32;
const VECTOR_HEADER: usize = 24;

fn format_err(path: &Path, offset: u64, detail: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.display().to_string(),
        offset,
        detail: detail.into(),
    }
}

/// Parse the fixed prelude shared by both binary containers: magic, version,
/// dtype, reserved bytes. Returns the dtype.
fn parse_prelude(path: &Path, bytes: &[u8], magic: &[u8; 8], header_len: usize) -> Result<u8, CliError> {
    if bytes.len() < header_len {
        return Err(format_err(
            path,
            bytes.len() as u64,
            format!("truncated header: {} bytes, need {header_len}", bytes.len()),
        ));
    }
    if &bytes[..8] != magic {
        return Err(format_err(
            path,
            0,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..8]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format_err(
            path,
            8,
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let dtype = bytes[12];
    if dtype != DTYPE_F32 && dtype != DTYPE_F64 {
        return Err(format_err(
            path,
            12,
            format!("unknown dtype {dtype}, expected 1 (float32) or 2 (float64)"),
        ));
    }
    for (i, &b) in bytes[13..16].iter().enumerate() {
        if b != 0 {
            return Err(format_err(path, 13 + i as u64, format!("reserved byte is {b}, expected 0")));
        }
    }
    Ok(dtype)
}

fn value_width(dtype: u8) -> usize {
    match dtype {
        DTYPE_F32 => 4,
        _ => 8,
    }
}

/// Decode `count` values starting at `start`, widening float32. The caller
/// has already verified the buffer is exactly the right length. Non-finite
/// payload values are format violations (the library rejects them anyway,
/// but here the byte offset can still be named).
fn parse_values(
    path: &Path,
    bytes: &[u8],
    start: usize,
    count: usize,
    dtype: u8,
) -> Result<Vec<f64>, CliError> {
    let width = value_width(dtype);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let at = start + i * width;
        let v = if dtype == DTYPE_F32 {
            f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as f64
        } else {
            f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
        };
        if !v.is_finite() {
            return Err(format_err(path, at as u64, format!("non-finite value {v}")));
        }
        out.push(v);
    }
    Ok(out)
}

fn check_payload_len(
    path: &Path,
    bytes: &[u8],
    header: usize,
    count: u64,
    dtype: u8,
) -> Result<usize, CliError> {
    let width = value_width(dtype) as u64;
    let expected = count
        .checked_mul(width)
        .and_then(|payload| payload.checked_add(header as u64))
        .filter(|&total| total <= usize::MAX as u64)
        .ok_or_else(|| format_err(path, 16, format!("declared element count {count} overflows")))?;
    if bytes.len() as u64 != expected {
        return Err(format_err(
            path,
            expected.min(bytes.len() as u64),
            format!("file has {} bytes, expected {expected}", bytes.len()),
        ));
    }
    Ok(count as usize)
}

pub fn write_matrix(path: &Path, a: &Array2<f64>) -> Result<(), CliError> {
    let (n, p) = a.dim();
    let mut buf = Vec::with_capacity(MATRIX_HEADER + 8 * n * p);
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(DTYPE_F64);
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(p as u64).to_le_bytes());
    for row in a.rows() {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let dtype = parse_prelude(path, &bytes, MATRIX_MAGIC, MATRIX_HEADER)?;
    let n = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let p = u64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
    let count = n
        .checked_mul(p)
        .ok_or_else(|| format_err(path, 16, format!("dimensions {n} x {p} overflow")))?;
    let count = check_payload_len(path, &bytes, MATRIX_HEADER, count, dtype)?;
    let values = parse_values(path, &bytes, MATRIX_HEADER, count, dtype)?;
    Array2::from_shape_vec((n as usize, p as usize), values)
        .map_err(|e| format_err(path, 16, e.to_string()))
}

pub fn write_vector(path: &Path, v: &Array1<f64>) -> Result<(), CliError> {
    let mut buf = Vec::with_capacity(VECTOR_HEADER + 8 * v.len());
    buf.extend_from_slice(VECTOR_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(DTYPE_F64);
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn read_vector(path: &Path) -> Result<Array1<f64>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let dtype = parse_prelude(path, &bytes, VECTOR_MAGIC, VECTOR_HEADER)?;
    let len = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let count = check_payload_len(path, &bytes, VECTOR_HEADER, len, dtype)?;
    let values = parse_values(path, &bytes, VECTOR_HEADER, count, dtype)?;
    Ok(Array1::from(values))
}

/// One named parameter block of the source model, in storage order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub length: u64,
}

/// Sparse pruning result. `indices` are strictly ascending positions of the
/// kept weights, `values` their new values; `config_digest` is the SHA-256
/// hex digest of the run-config file that produced the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub p: u64,
    pub k: u64,
    pub indices: Vec<u64>,
    pub values: Vec<f64>,
    pub objective: f64,
    pub config_digest: String,
}

/// Convert serde_json's line/column error position to a byte offset.
fn json_offset(text: &str, line: usize, column: usize) -> u64 {
    if line == 0 {
        return 0;
    }
    let mut offset = 0usize;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1).min(l.len())) as u64;
        }
        offset += l.len() + 1;
    }
    text.len() as u64
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        format_err(path, json_offset(&text, e.line(), e.column()), e.to_string())
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| format_err(path, 0, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_layers(path: &Path, layers: &[LayerEntry]) -> Result<(), CliError> {
    write_json(path, &layers)
}

pub fn read_layers(path: &Path) -> Result<Vec<LayerEntry>, CliError> {
    let layers: Vec<LayerEntry> = read_json(path)?;
    if layers.is_empty() {
        return Err(format_err(path, 0, "layer map must list at least one layer"));
    }
    Ok(layers)
}

pub fn write_solution(path: &Path, sol: &SolutionFile) -> Result<(), CliError> {
    write_json(path, sol)
}

pub fn read_solution(path: &Path) -> Result<SolutionFile, CliError> {
    let sol: SolutionFile = read_json(path)?;
    if !sol.indices.windows(2).all(|w| w[0] < w[1]) {
        return Err(format_err(path, 0, "solution indices must be strictly ascending"));
    }
    if sol.indices.len() != sol.values.len() {
        return Err(format_err(
            path,
            0,
            format!("{} indices vs {} values", sol.indices.len(), sol.values.len()),
        ));
    }
    Ok(sol)
}
