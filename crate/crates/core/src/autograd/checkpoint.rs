//! Binary parameter snapshots.
//!
//! Layout, all integers little-endian:
//! `b"TDCKPT\0\0"`, `u32` version, `u32` count, then per parameter
//! `u32` name length, UTF-8 name, `u32` rank, `u64` dims, raw `f64` data.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{ParamStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TDCKPT\0\0";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("parameter `{0}` has an unsupported rank or shape")]
    BadShape(String),
    #[error("parameter name is not valid utf-8")]
    BadName,
}

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore, CheckpointError> {
    let mut r = Reader { buf: bytes };
    if r.take(8).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| CheckpointError::BadName)?.to_string();
        let rank = r.u32()?;
        let dims: Vec<usize> = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_, _>>()?;
        let (rows, cols) = match dims.as_slice() {
            [n] => (*n, 1),
            [a, b] => (*a, *b),
            _ => return Err(CheckpointError::BadShape(name)),
        };
        let n = rows.checked_mul(cols).ok_or_else(|| CheckpointError::BadShape(name.clone()))?;
        let raw = r.take(n.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if store.id(&name).is_some() {
            return Err(CheckpointError::BadShape(name));
        }
        store.add(&name, Tensor::from_vec(rows, cols, data));
    }
    Ok(store)
}

pub fn save_checkpoint(store: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode(store)).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    decode(&bytes)
}
