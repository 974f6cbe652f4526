//! Checkpoint container shared by the pose tokenizer and the reasoner.
//!
//! Layout:
//!
//! ```text
//! [u64 little-endian: header length N]
//! [N bytes: UTF-8 JSON header]
//! [payload: f64 little-endian values, tensors back to back]
//! ```
//!
//! The header is `{"format": "posereason-checkpoint", "version": 1,
//! "metadata": {string: string}, "tensors": [{"name", "dtype": "f64",
//! "shape": [..], "offset", "len"}]}` where `offset` and `len` count
//! elements (not bytes) into the payload.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Params;

pub const FORMAT_NAME: &str = "posereason-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    metadata: BTreeMap<String, String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_metadata(mut self, key: &str, value: impl Into<String>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn push_array(&mut self, name: String, a: &Array2<f64>) {
        self.tensors.push(NamedTensor {
            name,
            shape: a.shape().to_vec(),
            data: a.iter().copied().collect(),
        });
    }

    /// Appends every parameter of `params` under `prefix`.
    pub fn push_params<P: Params + ?Sized>(&mut self, prefix: &str, params: &P) {
        params.visit(&mut |name, a| self.push_array(format!("{prefix}{name}"), a));
    }

    /// Overwrites `params` with the tensors stored under `prefix`. Shapes must match.
    pub fn load_params<P: Params + ?Sized>(&self, prefix: &str, params: &mut P) -> Result<()> {
        let mut err = None;
        params.visit_mut(&mut |name, a| {
            if err.is_some() {
                return;
            }
            let full = format!("{prefix}{name}");
            match self.get(&full) {
                None => err = Some(Error::Checkpoint(format!("missing tensor `{full}`"))),
                Some(t) if t.shape != a.shape() => {
                    err = Some(Error::Checkpoint(format!(
                        "tensor `{full}` has shape {:?}, expected {:?}",
                        t.shape,
                        a.shape()
                    )))
                }
                Some(t) => a.iter_mut().zip(&t.data).for_each(|(d, s)| *d = *s),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let expected: usize = t.shape.iter().product();
            if expected != t.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{}` shape {:?} does not match {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            entries.push(TensorEntry {
                name: t.name.clone(),
                dtype: "f64".into(),
                shape: t.shape.clone(),
                offset,
                len: t.data.len(),
            });
            offset += t.data.len();
        }
        let header = serde_json::to_vec(&Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            metadata: self.metadata.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(8 + header.len() + offset * 8);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Checkpoint("truncated header length".into()))?;
        let header_len = u64::from_le_bytes(len_bytes) as usize;
        let header_bytes = bytes
            .get(8..8 + header_len)
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(header_bytes)?;
        if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        let payload = &bytes[8 + header_len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            if e.dtype != "f64" {
                return Err(Error::Checkpoint(format!("unsupported dtype {}", e.dtype)));
            }
            let raw = payload
                .get(e.offset * 8..(e.offset + e.len) * 8)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{}` out of bounds", e.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        Ok(Self {
            metadata: header.metadata,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
