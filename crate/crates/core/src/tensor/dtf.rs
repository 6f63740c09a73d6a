//! The `dtf` tensor file format.
//!
//! A single ASCII header line `DTF1 <order> <extent_1> ... <extent_N>`
//! terminated by `\n`, followed by exactly `∏ extents` little-endian IEEE-754
//! binary64 values in row-major order. Nothing may follow the payload.

use std::fs;
use std::path::Path;

use super::DenseTensor;
use crate::error::{Result, TrnnError};

const MAGIC: &str = "DTF1";
const MAX_HEADER: usize = 4096;

pub fn to_bytes(t: &DenseTensor) -> Vec<u8> {
    let mut header = format!("{MAGIC} {}", t.order());
    for e in t.shape() {
        header.push_str(&format!(" {e}"));
    }
    header.push('\n');
    let mut out = Vec::with_capacity(header.len() + 8 * t.len());
    out.extend_from_slice(header.as_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a `dtf` byte buffer. `origin` only labels error messages.
pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<DenseTensor> {
    let err = |reason: String| TrnnError::format(origin, reason);
    let nl = bytes
        .iter()
        .take(MAX_HEADER)
        .position(|&b| b == b'\n')
        .ok_or_else(|| err("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| err("header is not UTF-8".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(MAGIC) {
        return Err(err(format!("bad magic, expected {MAGIC}")));
    }
    let parse = |s: Option<&str>, what: &str| -> Result<usize> {
        s.ok_or_else(|| err(format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|e| err(format!("bad {what}: {e}")))
    };
    let order = parse(fields.next(), "order")?;
    let shape = (0..order)
        .map(|k| parse(fields.next(), &format!("extent {}", k + 1)))
        .collect::<Result<Vec<_>>>()?;
    if fields.next().is_some() {
        return Err(err("trailing fields in header".into()));
    }
    let count: usize = shape.iter().product();
    let payload = &bytes[nl + 1..];
    if payload.len() != count * 8 {
        return Err(err(format!(
            "payload has {} bytes, header requires {}",
            payload.len(),
            count * 8
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DenseTensor::new(shape, data).map_err(|e| err(e.to_string()))
}

pub fn write(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(t)).map_err(|e| TrnnError::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| TrnnError::io(path, e))?;
    from_bytes(&bytes, path)
}
