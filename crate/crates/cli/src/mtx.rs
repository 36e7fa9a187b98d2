//! MTX1: a minimal binary matrix container for activation dumps,
//! prediction tables, and checkpoints.
//!
//! Layout (14-byte header, then the payload):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MTX1"
//! 4       1     version (1)
//! 5       1     dtype: 1 = f32, 2 = f64
//! 6       4     rows, u32 little-endian
//! 10      4     cols, u32 little-endian
//! 14      ...   row-major payload, little-endian floats
//! ```
//!
//! Writes always use f64; reads widen f32 payloads to f64. Round-tripping
//! an f64 matrix is bit-exact. See `docs/mtx1.md` for the one-page spec.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rashomon_core::linalg::LinalgError;
use rashomon_core::Matrix;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"MTX1";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
pub const DTYPE_F64: u8 = 2;
pub const HEADER_LEN: usize = 14;

#[derive(Debug, Error)]
pub enum MtxError {
    #[error("{path}: bad magic {found:02x?}, expected \"MTX1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported version {found}")]
    UnsupportedVersion { path: PathBuf, found: u8 },
    #[error("{path}: unsupported dtype {found} (1 = f32, 2 = f64)")]
    UnsupportedDtype { path: PathBuf, found: u8 },
    #[error("{path}: length mismatch, expected {expected} payload bytes, found {found}")]
    LengthMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: header truncated ({found} bytes)")]
    TruncatedHeader { path: PathBuf, found: usize },
    #[error("{path}: invalid matrix content: {source}")]
    Content { path: PathBuf, source: LinalgError },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Serializes a matrix as an f64 MTX1 byte vector.
pub fn encode_matrix(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data().len() * 8);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F64);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes MTX1 bytes; `origin` is used for error context only.
pub fn decode_matrix(bytes: &[u8], origin: &Path) -> Result<Matrix, MtxError> {
    let path = origin.to_path_buf();
    if bytes.len() < HEADER_LEN {
        return Err(MtxError::TruncatedHeader {
            path,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(MtxError::BadMagic { path, found: magic });
    }
    if bytes[4] != VERSION {
        return Err(MtxError::UnsupportedVersion {
            path,
            found: bytes[4],
        });
    }
    let dtype = bytes[5];
    let elem = match dtype {
        DTYPE_F32 => 4,
        DTYPE_F64 => 8,
        other => {
            return Err(MtxError::UnsupportedDtype { path, found: other });
        }
    };
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expected = rows * cols * elem;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(MtxError::LengthMismatch {
            path,
            expected,
            found: payload.len(),
        });
    }
    let data: Vec<f64> = match dtype {
        DTYPE_F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        _ => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Matrix::new(rows, cols, data).map_err(|source| MtxError::Content { path, source })
}

pub fn write_matrix(m: &Matrix, path: &Path) -> Result<(), MtxError> {
    let bytes = encode_matrix(m);
    let mut file = fs::File::create(path).map_err(|source| MtxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| MtxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_matrix(path: &Path) -> Result<Matrix, MtxError> {
    let bytes = fs::read(path).map_err(|source| MtxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_matrix(&bytes, path)
}
