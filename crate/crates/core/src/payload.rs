//! Raw little-endian float64 payload files guarded by CRC32.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub(crate) fn encode(values: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Writes `values` and returns the CRC32 of the written bytes.
pub(crate) fn write_f64(path: &Path, values: &[f64]) -> Result<u32> {
    let bytes = encode(values);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(crc32fast::hash(&bytes))
}

pub(crate) fn read_f64(path: &Path, expected_len: usize, expected_crc: u32) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected_len * 8 {
        return Err(Error::format(
            path,
            format!(
                "truncated payload: {} bytes, expected {}",
                bytes.len(),
                expected_len * 8
            ),
        ));
    }
    let actual = crc32fast::hash(&bytes);
    if actual != expected_crc {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
            expected: expected_crc,
            actual,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
