//! ATN1: a stream of attention tensors.
//!
//! Each tensor is stored as
//!
//! ```text
//! "ATN1" | u16 LE version (=1) | u32 LE header length | JSON header | f32 LE payload
//! ```
//!
//! where the header is `{"layers", "heads", "seq_len", "dtype": "f32", "meta"}`
//! and the payload holds `layers * heads * seq_len * seq_len` row-major
//! weights. Tensors are concatenated; an empty file is a valid empty stream.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AsaError, AttentionTensor, TensorMeta};

pub const ATN1_MAGIC: &[u8; 4] = b"ATN1";
pub const ATN1_VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    layers: usize,
    heads: usize,
    seq_len: usize,
    dtype: String,
    #[serde(default)]
    meta: TensorMeta,
}

pub fn write_attention<W: Write>(tensors: &[AttentionTensor], mut out: W) -> Result<(), AsaError> {
    for t in tensors {
        let header = Header {
            layers: t.layers(),
            heads: t.heads(),
            seq_len: t.seq_len(),
            dtype: "f32".into(),
            meta: t.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let len = u32::try_from(json.len()).map_err(|_| AsaError::Format {
            offset: 0,
            message: "header longer than u32::MAX".into(),
        })?;
        out.write_all(ATN1_MAGIC)?;
        out.write_all(&ATN1_VERSION.to_le_bytes())?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(&json)?;
        let mut payload = Vec::with_capacity(t.weights().len() * 4);
        for w in t.weights() {
            payload.extend_from_slice(&w.to_le_bytes());
        }
        out.write_all(&payload)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_attention_file(tensors: &[AttentionTensor], path: impl AsRef<Path>) -> Result<(), AsaError> {
    let file = fs::File::create(path)?;
    write_attention(tensors, std::io::BufWriter::new(file))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], AsaError> {
        if self.bytes.len() - self.pos < n {
            return Err(AsaError::Format {
                offset: self.pos as u64,
                message: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
}

/// Parses and validates every tensor in `bytes`.
pub fn read_attention(bytes: &[u8]) -> Result<Vec<AttentionTensor>, AsaError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let mut tensors = Vec::new();
    while cur.pos < bytes.len() {
        let start = cur.pos as u64;
        let magic = cur.take(4, "magic")?;
        if magic != ATN1_MAGIC {
            return Err(AsaError::Format {
                offset: start,
                message: format!("bad magic {magic:?}, expected \"ATN1\""),
            });
        }
        let version = u16::from_le_bytes(cur.take(2, "version")?.try_into().expect("2 bytes"));
        if version != ATN1_VERSION {
            return Err(AsaError::Format {
                offset: start + 4,
                message: format!("unsupported version {version}"),
            });
        }
        let header_len = u32::from_le_bytes(cur.take(4, "header length")?.try_into().expect("4 bytes")) as usize;
        let header_offset = cur.pos as u64;
        let header: Header = serde_json::from_slice(cur.take(header_len, "header")?).map_err(|e| AsaError::Format {
            offset: header_offset,
            message: format!("invalid header: {e}"),
        })?;
        if header.dtype != "f32" {
            return Err(AsaError::Format {
                offset: header_offset,
                message: format!("unsupported dtype {:?}", header.dtype),
            });
        }
        let count = header
            .layers
            .checked_mul(header.heads)
            .and_then(|n| n.checked_mul(header.seq_len))
            .and_then(|n| n.checked_mul(header.seq_len))
            .ok_or_else(|| AsaError::Format {
                offset: header_offset,
                message: "tensor dimensions overflow".into(),
            })?;
        let payload_offset = cur.pos as u64;
        let payload = cur.take(count.saturating_mul(4), "payload")?;
        let weights = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let tensor = AttentionTensor::new(header.layers, header.heads, header.seq_len, weights, header.meta)
            .map_err(|e| AsaError::Format {
                offset: payload_offset,
                message: e.to_string(),
            })?;
        tensors.push(tensor);
    }
    Ok(tensors)
}

pub fn read_attention_file(path: impl AsRef<Path>) -> Result<Vec<AttentionTensor>, AsaError> {
    read_attention(&fs::read(path)?)
}
