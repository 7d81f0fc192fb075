//! Versioned binary container for named `f32` arrays plus JSON metadata.
//!
//! Layout (all integers little endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "TADAARCH"
//! 8       4     format version (u32, currently 1)
//! 12      4     header length H in bytes (u32)
//! 16      H     UTF-8 JSON header: {"meta": <any>, "payload_len": <u64>,
//!               "index": [{"name", "shape", "offset", "len"}, ...]}
//! 16+H    4·P   payload: P = payload_len f32 values
//! ```
//!
//! Index offsets and lengths count `f32` elements from the payload start.
//! Entries are contiguous and in order, every `len` equals the product of
//! its `shape`, names are unique, and the file ends exactly after the payload.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"TADAARCH";
pub const ARCHIVE_VERSION: u32 = 1;
const PREAMBLE: usize = 16;
/// Upper bound on any single decoded allocation (in elements).
const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorArchive {
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: serde_json::Value,
    payload_len: u64,
    index: Vec<IndexEntry>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl TensorArchive {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut index = Vec::with_capacity(self.tensors.len());
        let mut offset = 0u64;
        for t in &self.tensors {
            let len = t.data.len() as u64;
            if t.shape.iter().product::<usize>() as u64 != len {
                return Err(corrupt(format!("tensor {} does not fill its shape", t.name)));
            }
            index.push(IndexEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
                len,
            });
            offset += len;
        }
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            payload_len: offset,
            index,
        })
        .map_err(|e| corrupt(format!("header serialization: {e}")))?;
        let header_len = u32::try_from(header.len()).map_err(|_| corrupt("header exceeds 4 GiB"))?;
        let mut out = Vec::with_capacity(PREAMBLE + header.len() + 4 * offset as usize);
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parse and fully validate an archive.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREAMBLE {
            return Err(corrupt("file shorter than the archive preamble"));
        }
        if &bytes[..8] != ARCHIVE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != ARCHIVE_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let header_end = PREAMBLE
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt("header length exceeds file size"))?;
        let header: Header =
            serde_json::from_slice(&bytes[PREAMBLE..header_end]).map_err(|e| corrupt(format!("header: {e}")))?;
        let payload = &bytes[header_end..];
        if header.payload_len > MAX_ELEMENTS || payload.len() as u64 != header.payload_len * 4 {
            return Err(corrupt(format!(
                "payload holds {} bytes, header declares {} values",
                payload.len(),
                header.payload_len
            )));
        }
        let mut names = HashSet::new();
        let mut expected_offset = 0u64;
        let mut tensors = Vec::with_capacity(header.index.len());
        for entry in header.index {
            if !names.insert(entry.name.clone()) {
                return Err(corrupt(format!("duplicate tensor name {}", entry.name)));
            }
            let numel = entry
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .filter(|&n| n <= MAX_ELEMENTS)
                .ok_or_else(|| corrupt(format!("tensor {} has an oversized shape", entry.name)))?;
            if numel != entry.len || entry.offset != expected_offset {
                return Err(corrupt(format!(
                    "tensor {} has an inconsistent index entry",
                    entry.name
                )));
            }
            let end = entry
                .offset
                .checked_add(entry.len)
                .filter(|&e| e <= header.payload_len)
                .ok_or_else(|| corrupt(format!("tensor {} runs past the payload", entry.name)))?;
            let data: Vec<f32> = payload[entry.offset as usize * 4..end as usize * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(corrupt(format!("tensor {} holds non-finite values", entry.name)));
            }
            expected_offset = end;
            tensors.push(NamedTensor {
                name: entry.name,
                shape: entry.shape,
                data,
            });
        }
        if expected_offset != header.payload_len {
            return Err(corrupt("payload holds unindexed values"));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    /// Write via a temporary sibling and rename, so readers never observe a
    /// partially written file.
    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| Error::load(path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TensorArchive {
        let mut a = TensorArchive::new(serde_json::json!({"kind": "test", "epoch": 3}));
        a.push("w", &[2, 2], vec![1.0, -2.5, 0.0, 3.25]);
        a.push("b", &[2], vec![0.5, 0.125]);
        a
    }

    #[test]
    fn round_trip() {
        let a = sample();
        assert_eq!(TensorArchive::decode(&a.encode().unwrap()).unwrap(), a);
    }

    #[test]
    fn truncation_and_corruption_are_rejected() {
        let bytes = sample().encode().unwrap();
        assert!(TensorArchive::decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(TensorArchive::decode(&bytes[..10]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(TensorArchive::decode(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(TensorArchive::decode(&bad_version).is_err());
        let mut extra = bytes;
        extra.extend_from_slice(&[0, 0, 0, 0]);
        assert!(TensorArchive::decode(&extra).is_err());
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut a = sample();
        a.tensors[1].data[0] = f32::NAN;
        assert!(TensorArchive::decode(&a.encode().unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = TensorArchive::decode(&bytes);
        }

        #[test]
        fn values_round_trip_bit_exact(vals in proptest::collection::vec(-1e6f32..1e6, 0..64)) {
            let mut a = TensorArchive::new(serde_json::Value::Null);
            a.push("x", &[vals.len()], vals.clone());
            let back = TensorArchive::decode(&a.encode().unwrap()).unwrap();
            prop_assert_eq!(&back.tensors[0].data, &vals);
        }
    }
}
