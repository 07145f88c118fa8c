//! Binary feature-store format.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic    "CSKN"
//! version  u16  (= 1)
//! dim      u32
//! count    u32
//! count × record:
//!     id_len   u16, then id_len bytes of UTF-8 model id
//!     class    u16
//!     view     u8
//!     values   dim × f32
//! ```

use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CSKN";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not a feature store (bad magic)")]
    BadMagic,
    #[error("unsupported feature store version {0}")]
    UnsupportedVersion(u16),
    #[error("feature store truncated at byte {0}")]
    Truncated(usize),
    #[error("invalid UTF-8 model id at byte {0}")]
    InvalidModelId(usize),
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("record for {model_id} has {found} values, store dimension is {expected}")]
    WrongLength {
        model_id: String,
        expected: usize,
        found: usize,
    },
    #[error("model id {0:?} is longer than 65535 bytes")]
    ModelIdTooLong(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreRecord {
    pub model_id: String,
    pub class_id: u16,
    pub view_index: u8,
    pub values: Vec<f32>,
}

pub fn encode(dim: usize, records: &[StoreRecord]) -> Result<Vec<u8>, StoreError> {
    let mut out = Vec::with_capacity(14 + records.len() * (dim * 4 + 16));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        if r.values.len() != dim {
            return Err(StoreError::WrongLength {
                model_id: r.model_id.clone(),
                expected: dim,
                found: r.values.len(),
            });
        }
        let id = r.model_id.as_bytes();
        let id_len =
            u16::try_from(id.len()).map_err(|_| StoreError::ModelIdTooLong(r.model_id.clone()))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&r.class_id.to_le_bytes());
        out.push(r.view_index);
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(StoreError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, StoreError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, StoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Returns `(dim, records)`.
pub fn decode(bytes: &[u8]) -> Result<(usize, Vec<StoreRecord>), StoreError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| StoreError::BadMagic)? != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    // Don't trust `count` for the allocation.
    let mut records = Vec::with_capacity(count.min(bytes.len() / (5 + dim * 4).max(1)));
    for _ in 0..count {
        let id_len = r.u16()? as usize;
        let id_at = r.pos;
        let model_id = std::str::from_utf8(r.take(id_len)?)
            .map_err(|_| StoreError::InvalidModelId(id_at))?
            .to_owned();
        let class_id = r.u16()?;
        let view_index = r.take(1)?[0];
        let raw = r.take(dim * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(StoreRecord {
            model_id,
            class_id,
            view_index,
            values,
        });
    }
    if r.pos != bytes.len() {
        return Err(StoreError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok((dim, records))
}

pub fn write_file(path: &Path, dim: usize, records: &[StoreRecord]) -> Result<(), StoreError> {
    let bytes = encode(dim, records)?;
    std::fs::write(path, bytes).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<(usize, Vec<StoreRecord>), StoreError> {
    let bytes = std::fs::read(path).map_err(|source| StoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}
