//! Layout: `HDRGARC1`, u64 LE header length, JSON header, raw little-endian
//! array data, SHA-256 of everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

use super::{require_file, write_atomic};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"HDRGARC1";
const DIGEST_LEN: usize = 32;

/// One stored array.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayData {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

impl ArrayData {
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        let mut bytes = Vec::with_capacity(t.len() * T::DTYPE.size());
        for &v in t.data() {
            v.write_le(&mut bytes);
        }
        ArrayData {
            dtype: T::DTYPE,
            shape: t.shape().to_vec(),
            bytes,
        }
    }

    /// Decodes, converting between f32 and f64 when the stored type differs.
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let size = self.dtype.size();
        let data = match self.dtype {
            DType::F32 => self
                .bytes
                .chunks_exact(size)
                .map(|b| T::lit(f32::read_le(b) as f64))
                .collect(),
            DType::F64 => self.bytes.chunks_exact(size).map(|b| T::lit(f64::read_le(b))).collect(),
        };
        Tensor::from_vec(&self.shape, data)
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    arrays: Vec<Entry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub meta: serde_json::Value,
    pub arrays: BTreeMap<String, ArrayData>,
    /// Hex SHA-256 trailer of the file.
    pub sha256: String,
}

impl Archive {
    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::Format(format!("archive has no array `{name}`")))?
            .to_tensor()
    }
}

pub fn encode_archive(meta: &serde_json::Value, arrays: &BTreeMap<String, ArrayData>) -> Result<Vec<u8>> {
    let mut offset = 0;
    let entries = arrays
        .iter()
        .map(|(name, a)| {
            let e = Entry {
                name: name.clone(),
                dtype: a.dtype,
                shape: a.shape.clone(),
                offset,
                len: a.bytes.len(),
            };
            offset += a.bytes.len();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        meta: meta.clone(),
        arrays: entries,
    })?;
    let mut out = Vec::with_capacity(16 + header.len() + offset + DIGEST_LEN);
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for a in arrays.values() {
        out.extend_from_slice(&a.bytes);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Atomically writes an archive and returns its hex SHA-256.
pub fn write_archive(path: &Path, meta: &serde_json::Value, arrays: &BTreeMap<String, ArrayData>) -> Result<String> {
    let bytes = encode_archive(meta, arrays)?;
    write_atomic(path, &bytes)?;
    Ok(hex::encode(&bytes[bytes.len() - DIGEST_LEN..]))
}

pub fn read_archive(path: &Path) -> Result<Archive> {
    require_file(path)?;
    let bytes = std::fs::read(path)?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < ARCHIVE_MAGIC.len() + 8 + DIGEST_LEN || &bytes[..8] != ARCHIVE_MAGIC {
        return Err(bad("not an archive"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum(path.to_path_buf()));
    }
    let hlen = u64::from_le_bytes(body[8..16].try_into().expect("8 bytes")) as usize;
    let data_start = 16usize.checked_add(hlen).filter(|&e| e <= body.len()).ok_or_else(|| bad("header overruns file"))?;
    let header: Header = serde_json::from_slice(&body[16..data_start])?;
    let data = &body[data_start..];
    let mut arrays = BTreeMap::new();
    for e in header.arrays {
        let n: usize = e.shape.iter().product();
        if n * e.dtype.size() != e.len {
            return Err(bad(&format!("array `{}` length does not match its shape", e.name)));
        }
        let raw = data.get(e.offset..e.offset + e.len).ok_or_else(|| bad("array data overruns file"))?;
        arrays.insert(
            e.name,
            ArrayData {
                dtype: e.dtype,
                shape: e.shape,
                bytes: raw.to_vec(),
            },
        );
    }
    Ok(Archive {
        meta: header.meta,
        arrays,
        sha256: hex::encode(digest),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BTreeMap<String, ArrayData> {
        let mut m = BTreeMap::new();
        m.insert("a".into(), ArrayData::from_tensor(&Tensor::<f32>::from_fn(&[2, 3], |i| i as f32 * 0.1)));
        m.insert("b".into(), ArrayData::from_tensor(&Tensor::<f64>::full(&[1], -2.5)));
        m
    }

    #[test]
    fn roundtrip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let meta = serde_json::json!({"epoch": 3});
        let sha = write_archive(&p, &meta, &sample()).unwrap();
        let a = read_archive(&p).unwrap();
        assert_eq!(a.meta, meta);
        assert_eq!(a.arrays, sample());
        assert_eq!(a.sha256, sha);
        assert_eq!(a.tensor::<f64>("b").unwrap().data(), &[-2.5]);

        let mut bytes = std::fs::read(&p).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(read_archive(&p), Err(Error::Checksum(_))));
    }

    #[test]
    fn cross_precision_load() {
        let a = ArrayData::from_tensor(&Tensor::<f64>::full(&[2], 0.5));
        assert_eq!(a.to_tensor::<f32>().unwrap().data(), &[0.5f32, 0.5]);
    }
}
