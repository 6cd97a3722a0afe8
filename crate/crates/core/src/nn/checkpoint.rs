//! Binary container for named `f64` tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! u64          header length H in bytes
//! [u8; H]      UTF-8 JSON header:
//!              {"format":"progap-tensors","version":1,
//!               "tensors":[{"name":..,"shape":[..],"offset":..}, ..]}
//! [f64 LE]*    tensor data; `offset` is the byte offset of a tensor's first
//!              element from the start of this section
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "progap-tensors";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

pub fn encode(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for t in tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.data.len() {
            return Err(Error::Shape(format!(
                "tensor {} has shape {:?} but {} values",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        entries.push(Entry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
        });
        offset += 8 * t.data.len() as u64;
    }
    let header = serde_json::to_vec(&Header {
        format: FORMAT.into(),
        version: VERSION,
        tensors: entries,
    })?;
    let mut out = Vec::with_capacity(8 + header.len() + offset as usize);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let corrupt = |msg: &str| Error::Validation(format!("corrupt tensor container: {msg}"));
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| corrupt("truncated length prefix"))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let header_bytes = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(header_bytes)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(corrupt("unknown format or version"));
    }
    let data = &bytes[8 + header_len..];
    header
        .tensors
        .into_iter()
        .map(|e| {
            let count: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let raw = data
                .get(start..start + 8 * count)
                .ok_or_else(|| corrupt(&format!("tensor {} runs past the end", e.name)))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(NamedTensor::new(e.name, e.shape, values))
        })
        .collect()
}

pub fn save(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    fs::write(path, encode(tensors)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<NamedTensor>> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_length_prefixed_json() {
        let bytes = encode(&[NamedTensor::new("w", vec![2], vec![1.5, -2.0])]).unwrap();
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + len]).unwrap();
        assert_eq!(header["tensors"][0]["name"], "w");
        assert_eq!(header["tensors"][0]["offset"], 0);
        assert_eq!(&bytes[8 + len..8 + len + 8], &1.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_bad_shape_and_truncation() {
        assert!(encode(&[NamedTensor::new("w", vec![3], vec![1.0])]).is_err());
        let bytes = encode(&[NamedTensor::new("w", vec![2], vec![1.0, 2.0])]).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(&bytes[..4]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(tensors in proptest::collection::vec(
            ("[a-z/0-9]{1,12}", proptest::collection::vec(-1e6f64..1e6, 0..20)), 0..5)
        ) {
            let tensors: Vec<_> = tensors
                .into_iter()
                .map(|(name, data)| NamedTensor::new(name, vec![data.len()], data))
                .collect();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("t.bin");
            save(&path, &tensors).unwrap();
            prop_assert_eq!(load(&path).unwrap(), tensors);
        }
    }
}
