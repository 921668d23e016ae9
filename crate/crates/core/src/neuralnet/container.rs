//! Versioned binary container for model parameters.
//!
//! ```text
//! magic "HCTM" | u32 version | u8 storage kind | u32 manifest length |
//! manifest (canonical JSON) | u32 tensor count |
//! per tensor: u64 byte length, little-endian payload
//! ```
//!
//! All integers are little-endian. An int8 payload starts with its `f32`
//! scale. The manifest is serialized with sorted keys so identical models give
//! identical bytes on every platform.

use serde_json::Value;

use crate::error::{Error, Result};
use crate::neuralnet::quant::QuantizedTensor;

pub const MAGIC: &[u8; 4] = b"HCTM";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StorageKind {
    F32 = 0,
    F64 = 1,
    Int8 = 2,
}

impl StorageKind {
    fn from_u8(v: u8) -> Option<StorageKind> {
        match v {
            0 => Some(StorageKind::F32),
            1 => Some(StorageKind::F64),
            2 => Some(StorageKind::Int8),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Blob {
    F32(Vec<f32>),
    F64(Vec<f64>),
    Int8(QuantizedTensor),
}

impl Blob {
    fn kind(&self) -> StorageKind {
        match self {
            Blob::F32(_) => StorageKind::F32,
            Blob::F64(_) => StorageKind::F64,
            Blob::Int8(_) => StorageKind::Int8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Blob::F32(v) => v.len(),
            Blob::F64(v) => v.len(),
            Blob::Int8(q) => q.values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: StorageKind,
    pub manifest: Value,
    pub blobs: Vec<Blob>,
}

impl Container {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for (i, blob) in self.blobs.iter().enumerate() {
            if blob.kind() != self.kind {
                return Err(Error::Format {
                    offset: out.len() as u64,
                    reason: format!("tensor {i} is {:?} in a {:?} container", blob.kind(), self.kind),
                });
            }
            match blob {
                Blob::F32(v) => {
                    out.extend_from_slice(&((v.len() * 4) as u64).to_le_bytes());
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                Blob::F64(v) => {
                    out.extend_from_slice(&((v.len() * 8) as u64).to_le_bytes());
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                Blob::Int8(q) => {
                    out.extend_from_slice(&((q.values.len() + 4) as u64).to_le_bytes());
                    out.extend_from_slice(&q.scale.to_le_bytes());
                    out.extend(q.values.iter().map(|&b| b as u8));
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Container> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: format!("bad magic {magic:?}"),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let kind_at = r.pos;
        let kind_byte = r.take(1, "storage kind")?[0];
        let kind = StorageKind::from_u8(kind_byte).ok_or_else(|| Error::Format {
            offset: kind_at as u64,
            reason: format!("unknown storage kind {kind_byte}"),
        })?;
        let mlen = r.u32("manifest length")? as usize;
        let manifest_at = r.pos;
        let manifest: Value = serde_json::from_slice(r.take(mlen, "manifest")?).map_err(|e| Error::Format {
            offset: manifest_at as u64,
            reason: format!("manifest is not valid JSON: {e}"),
        })?;
        let count = r.u32("tensor count")? as usize;
        let mut blobs = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let len_at = r.pos;
            let len = r.u64("tensor length")? as usize;
            let width = match kind {
                StorageKind::F32 => 4,
                StorageKind::F64 => 8,
                StorageKind::Int8 => 1,
            };
            let bad_len = match kind {
                StorageKind::Int8 => len < 4,
                _ => !len.is_multiple_of(width),
            };
            if bad_len {
                return Err(Error::Format {
                    offset: len_at as u64,
                    reason: format!("tensor {i} has invalid byte length {len}"),
                });
            }
            let data = r.take(len, "tensor payload")?;
            blobs.push(match kind {
                StorageKind::F32 => Blob::F32(
                    data.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                StorageKind::F64 => Blob::F64(
                    data.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                StorageKind::Int8 => Blob::Int8(QuantizedTensor {
                    scale: f32::from_le_bytes(data[..4].try_into().unwrap()),
                    values: data[4..].iter().map(|&b| b as i8).collect(),
                }),
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                reason: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Container { kind, manifest, blobs })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                reason: format!("truncated while reading {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}
