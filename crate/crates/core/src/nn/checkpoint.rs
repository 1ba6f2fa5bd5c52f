//! Flat binary parameter container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! b"BGGAN1"
//! u32            number of header dims H
//! H x u64        header dims (architecture description, caller-defined)
//! u32            number of parameters P
//! P x (u64, u64) rows, cols of each parameter
//! ...            every parameter's values as f64, declaration order,
//!                column-major within a parameter
//! ```
//!
//! Only parameter values are stored; Adam state is not.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"BGGAN1";

pub fn encode(header: &[u64], values: &[&DMatrix<f64>]) -> Vec<u8> {
    let total: usize = values.iter().map(|m| m.len()).sum();
    let mut buf = Vec::with_capacity(16 + 8 * header.len() + 16 * values.len() + 8 * total);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    for d in header {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for m in values {
        buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    }
    for m in values {
        for x in m.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a checkpoint into `(header, values)`.
pub fn decode(bytes: &[u8]) -> Result<(Vec<u64>, Vec<DMatrix<f64>>)> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a BGGAN1 checkpoint".into()));
    }
    let h = r.u32()? as usize;
    let header = (0..h).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let p = r.u32()? as usize;
    let shapes = (0..p)
        .map(|_| Ok((r.u64()? as usize, r.u64()? as usize)))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(p);
    for (rows, cols) in shapes {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("parameter size overflow".into()))?;
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        values.push(DMatrix::from_vec(rows, cols, data));
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok((header, values))
}

/// Writes to a temporary sibling file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<(Vec<u64>, Vec<DMatrix<f64>>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
