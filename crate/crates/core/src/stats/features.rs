//! Binary matrix files for feature sets and similarity matrices.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic  b"T2IM"
//!      4     4  u32    format version (1)
//!      8     8  u64    n (rows)
//!     16     8  u64    d (columns)
//!     24     4  u32    dtype (1 = float32)
//!     28   4nd  f32    row-major payload
//! ```
//!
//! A JSON sidecar at `<path>.json` carries `{n, d, dtype, source}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"T2IM";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
const HEADER_LEN: usize = 28;

/// Row-major `rows x cols` matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub n: usize,
    pub d: usize,
    pub vectors: Vec<f64>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub n: usize,
    pub d: usize,
    pub dtype: String,
    pub source: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl FeatureSet {
    pub fn new(n: usize, d: usize, vectors: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if vectors.len() != n * d {
            return Err(Error::invalid("feature set", format!("{} values for {n}x{d}", vectors.len())));
        }
        Ok(FeatureSet {
            n,
            d,
            vectors,
            source: source.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], source: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(r.len(), d));
        }
        FeatureSet::new(rows.len(), d, rows.concat(), source)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.chunks(self.d.max(1)).take(self.n)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.vectors.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("feature set"))
        }
    }

    /// Writes the binary file (values narrowed to f32) and its sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 4 * self.vectors.len());
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        buf.extend_from_slice(&(self.d as u64).to_le_bytes());
        buf.extend_from_slice(&DTYPE_F32.to_le_bytes());
        for v in &self.vectors {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))?;
        let sidecar = Sidecar {
            n: self.n,
            d: self.d,
            dtype: "float32".into(),
            source: self.source.clone(),
        };
        let side = sidecar_path(path);
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        fs::write(&side, text).map_err(|e| Error::io(side, e))
    }

    /// Reads a binary file; the sidecar is optional and, when present, must
    /// agree with the header.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: String| Error::invalid("feature file", format!("{}: {m}", path.display()));
        if bytes.len() < HEADER_LEN || bytes[..4] != MAGIC {
            return Err(bad("missing header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let (n, d) = (u64_at(8) as usize, u64_at(16) as usize);
        if u32_at(24) != DTYPE_F32 {
            return Err(bad(format!("unsupported dtype code {}", u32_at(24))));
        }
        let expected = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| bad("shape overflow".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(bad(format!("payload is {} bytes, header implies {expected}", payload.len())));
        }
        let vectors = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();

        let side = sidecar_path(path);
        let source = match fs::read_to_string(&side) {
            Ok(text) => {
                let s: Sidecar =
                    serde_json::from_str(&text).map_err(|e| bad(format!("sidecar: {e}")))?;
                if (s.n, s.d) != (n, d) || s.dtype != "float32" {
                    return Err(bad("sidecar disagrees with header".into()));
                }
                s.source
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(side, e)),
        };
        FeatureSet::new(n, d, vectors, source)
    }
}
