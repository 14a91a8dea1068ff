//! Checkpoint container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic    b"CCKP"
//! version  u32 = 1
//! dtype    u8 (bytes per value: 4 = f32, 8 = f64), 3 reserved bytes
//! digest   u64 — FNV-1a of the metadata JSON
//! meta_len u32, metadata JSON (model config + vocabulary + mode label)
//! count    u32, then per parameter:
//!   name_len u16, name bytes
//!   ndim     u8,  dims u32 each
//!   values   numel * dtype raw little-endian bytes
//! ```
//!
//! Values are written as raw bits, so a save/load round trip is bit-exact
//! in either precision. The digest ties the parameter payload to the
//! config that produced it; a checkpoint whose metadata was altered or
//! truncated fails to load.

use crate::model::{ModelConfig, Vocabulary};
use crate::num::Real;
use crate::params::ParamStore;
use crate::rng::fnv1a64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAGIC: [u8; 4] = *b"CCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub vocab_words: Vec<String>,
    /// Epoch the parameters were taken from, when produced by training.
    pub best_epoch: Option<usize>,
}

impl CheckpointMeta {
    pub fn vocabulary(&self) -> Result<Vocabulary, CheckpointError> {
        Vocabulary::from_words(self.vocab_words.clone())
            .map_err(|e| CheckpointError::Corrupt(format!("bad vocabulary: {e}")))
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint: bad magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint stores {found}-byte values, expected {expected}-byte")]
    DtypeMismatch { expected: u8, found: u8 },
    #[error("checkpoint digest mismatch: header {header:#x}, metadata {computed:#x}")]
    DigestMismatch { header: u64, computed: u64 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.at + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "truncated at byte {} (wanted {n} more)",
                self.at
            )));
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn encode<F: Real>(store: &ParamStore<F>, meta: &CheckpointMeta) -> Vec<u8> {
    let meta_json = serde_json::to_vec(meta).expect("serializable metadata");
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(F::BYTE_WIDTH);
    out.extend_from_slice(&[0u8; 3]);
    out.extend_from_slice(&fnv1a64(&meta_json).to_le_bytes());
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, param) in store.iter() {
        let name = param.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(param.shape.len() as u8);
        for &d in &param.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &param.values {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn decode<F: Real>(bytes: &[u8]) -> Result<(ParamStore<F>, CheckpointMeta), CheckpointError> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let dtype = r.u8()?;
    r.take(3)?;
    if dtype != F::BYTE_WIDTH {
        return Err(CheckpointError::DtypeMismatch {
            expected: F::BYTE_WIDTH,
            found: dtype,
        });
    }
    let digest = r.u64()?;
    let meta_len = r.u32()? as usize;
    let meta_json = r.take(meta_len)?;
    let computed = fnv1a64(meta_json);
    if computed != digest {
        return Err(CheckpointError::DigestMismatch {
            header: digest,
            computed,
        });
    }
    let meta: CheckpointMeta = serde_json::from_slice(meta_json)
        .map_err(|e| CheckpointError::Corrupt(format!("metadata: {e}")))?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("non-utf8 parameter name".into()))?;
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let width = F::BYTE_WIDTH as usize;
        let raw = r.take(numel * width)?;
        let values: Vec<F> = raw.chunks_exact(width).map(F::read_le).collect();
        store.add(&name, &shape, values);
    }
    if r.at != bytes.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.at
        )));
    }
    Ok((store, meta))
}

pub fn write_file<F: Real>(path: &Path, store: &ParamStore<F>, meta: &CheckpointMeta) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(store, meta)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_file<F: Real>(path: &Path) -> Result<(ParamStore<F>, CheckpointMeta), CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn fixture_meta() -> CheckpointMeta {
        CheckpointMeta {
            model: ModelConfig::small(),
            vocab_words: Vocabulary::from_corpus(["a road appears"]).words().to_vec(),
            best_epoch: Some(3),
        }
    }

    fn fixture_store() -> ParamStore<f32> {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(5);
        store.add_uniform("layer.weight", &[3, 4], 3, &mut rng);
        store.add_zeros("layer.bias", &[4]);
        store.add(
            "odd.values",
            &[5],
            vec![f32::MIN_POSITIVE, -0.0, 1.5e-40, f32::MAX, 7.25],
        );
        store
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let store = fixture_store();
        let meta = fixture_meta();
        let bytes = encode(&store, &meta);
        let (back, meta_back) = decode::<f32>(&bytes).unwrap();
        assert_eq!(meta, meta_back);
        assert_eq!(store.len(), back.len());
        for ((_, a), (_, b)) in store.iter().zip(back.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let abits: Vec<u32> = a.values.iter().map(|v| v.to_bits()).collect();
            let bbits: Vec<u32> = b.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(abits, bbits);
        }
    }

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.add("w", &[3], vec![1.0 / 3.0, f64::MIN_POSITIVE, -0.0]);
        let bytes = encode(&store, &fixture_meta());
        let (back, _) = decode::<f64>(&bytes).unwrap();
        let abits: Vec<u64> = store.get(store.lookup("w").unwrap()).values.iter().map(|v| v.to_bits()).collect();
        let bbits: Vec<u64> = back.get(back.lookup("w").unwrap()).values.iter().map(|v| v.to_bits()).collect();
        assert_eq!(abits, bbits);
    }

    #[test]
    fn dtype_mismatch_is_detected() {
        let bytes = encode(&fixture_store(), &fixture_meta());
        let err = decode::<f64>(&bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::DtypeMismatch { expected: 8, found: 4 }));
    }

    #[test]
    fn tampered_metadata_fails_digest() {
        let mut bytes = encode(&fixture_store(), &fixture_meta());
        // flip one byte inside the metadata JSON region
        bytes[30] ^= 0x01;
        let err = decode::<f32>(&bytes).unwrap_err();
        assert!(
            matches!(err, CheckpointError::DigestMismatch { .. }) || matches!(err, CheckpointError::Corrupt(_)),
            "{err}"
        );
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode(&fixture_store(), &fixture_meta());
        let err = decode::<f32>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, CheckpointError::Corrupt(_)));
    }

    #[test]
    fn bad_magic_is_detected() {
        let err = decode::<f32>(b"NOPE....").unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic));
    }
}
