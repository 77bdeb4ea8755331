//! Versioned binary container: a JSON header followed by a little-endian
//! `f64` parameter blob.
//!
//! ```text
//! magic "GPAIRBIN" | u32 version | u64 header_len | header json | u64 n | n x f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"GPAIRBIN";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_blob<H: Serialize, T: Scalar>(path: &Path, header: &H, values: &[T]) -> Result<()> {
    let header = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(28 + header.len() + 8 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_blob<H: DeserializeOwned, T: Scalar>(path: &Path) -> Result<(H, Vec<T>)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Format("truncated file".into()));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

fn decode<H: DeserializeOwned, T: Scalar>(mut bytes: &[u8]) -> Result<(H, Vec<T>)> {
    if take(&mut bytes, 8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().unwrap()) as usize;
    let header = serde_json::from_slice(take(&mut bytes, hlen)?)?;
    let n = u64::from_le_bytes(take(&mut bytes, 8)?.try_into().unwrap()) as usize;
    let raw = take(&mut bytes, n.checked_mul(8).ok_or_else(|| Error::Format("overflow".into()))?)?;
    if !bytes.is_empty() {
        return Err(Error::Format("trailing bytes".into()));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok((header, values))
}
