//! `TEABUF01` binary dataset files and their JSON sidecar.
//!
//! All integers and floats are little-endian.
//!
//! | field | type |
//! |---|---|
//! | magic | `b"TEABUF01"` |
//! | version | `u32` (= 1) |
//! | variant | `u8` (0 baseline, 1 aug_encoding, 2 aug_true) |
//! | state_dim `d` | `u32` |
//! | count `n` | `u64` |
//! | `n` records | see below |
//! | CRC-64/XZ of every preceding byte | `u64` |
//!
//! Each record is `16 d + 14` bytes: `state` (`d x f64`), `next_state`
//! (`d x f64`), `action` (`u8`), `reward` (`f64`), `done` (`u8`), `env_id` (`u32`).
//!
//! The sidecar lives next to the binary file as `<file>.json`.

use std::path::{Path, PathBuf};

use crc::{Crc, CRC_64_XZ};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, Result, Transition, Variant};
use crate::cartpole::Action;

pub const BUF_MAGIC: &[u8; 8] = b"TEABUF01";
pub const BUF_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 1 + 4 + 8;
const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// Provenance carried in the JSON sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub manifest: Option<String>,
    pub creation_seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    variant: Variant,
    state_dim: usize,
    count: usize,
    crc64: String,
    #[serde(flatten)]
    meta: DatasetMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

pub fn encode(ds: &Dataset) -> Vec<u8> {
    let d = ds.state_dim;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * (16 * d + 14) + 8);
    out.extend_from_slice(BUF_MAGIC);
    out.extend_from_slice(&BUF_VERSION.to_le_bytes());
    out.push(ds.variant.code());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for t in &ds.transitions {
        for v in t.state.iter().chain(&t.next_state) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(t.action.index() as u8);
        out.extend_from_slice(&t.reward.to_le_bytes());
        out.push(t.done as u8);
        out.extend_from_slice(&t.env_id.to_le_bytes());
    }
    let crc = CRC64.checksum(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(DatasetError::Format("truncated dataset file".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < HEADER_LEN + 8 {
        return Err(DatasetError::Format("truncated dataset file".into()));
    }
    if &bytes[..8] != BUF_MAGIC {
        return Err(DatasetError::Format("bad magic, not a TEABUF01 file".into()));
    }
    let mut r = Reader { bytes: &bytes[8..] };
    let version = r.u32()?;
    if version != BUF_VERSION {
        return Err(DatasetError::Format(format!("unsupported version {version}")));
    }
    let variant = r.u8()?;
    let variant = Variant::from_code(variant).ok_or_else(|| DatasetError::Format(format!("unknown variant code {variant}")))?;
    let d = r.u32()? as usize;
    let n = r.u64()? as usize;
    let record = 16 * d + 14;
    let expected = n
        .checked_mul(record)
        .and_then(|b| b.checked_add(HEADER_LEN + 8))
        .ok_or_else(|| DatasetError::Format("record count overflows".into()))?;
    if bytes.len() != expected {
        return Err(DatasetError::Format(format!(
            "truncated dataset file: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let body = &bytes[..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    let computed = CRC64.checksum(body);
    if stored != computed {
        return Err(DatasetError::Checksum { stored, computed });
    }
    let mut ds = Dataset::new(variant, d)?;
    ds.transitions.reserve(n);
    for _ in 0..n {
        let state = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let next_state = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let action = Action::from_index(r.u8()? as usize).map_err(|e| DatasetError::Format(e.to_string()))?;
        let reward = r.f64()?;
        let done = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(DatasetError::Format(format!("invalid done byte {b}"))),
        };
        let env_id = r.u32()?;
        ds.transitions.push(Transition {
            state,
            action,
            reward,
            next_state,
            done,
            env_id,
        });
    }
    Ok(ds)
}

/// Writes the binary file and its sidecar.
pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let bytes = encode(ds);
    let crc = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    std::fs::write(path, &bytes)?;
    let sidecar = Sidecar {
        format: "TEABUF01".into(),
        version: BUF_VERSION,
        variant: ds.variant,
        state_dim: ds.state_dim,
        count: ds.len(),
        crc64: format!("{crc:016x}"),
        meta: ds.meta.clone(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| DatasetError::Format(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Reads a dataset; sidecar metadata is attached when the sidecar exists.
pub fn load(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let mut ds = decode(&bytes)?;
    if let Ok(text) = std::fs::read_to_string(sidecar_path(path)) {
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| DatasetError::Format(format!("sidecar: {e}")))?;
        if sidecar.variant != ds.variant || sidecar.state_dim != ds.state_dim || sidecar.count != ds.len() {
            return Err(DatasetError::Format("sidecar disagrees with dataset header".into()));
        }
        ds.meta = sidecar.meta;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartpole::EnvManifest;
    use proptest::prelude::*;

    fn sample(n: usize) -> Dataset {
        let mut ds = Dataset::baseline();
        for i in 0..n {
            let f = i as f64;
            ds.append(Transition {
                state: vec![f, -f, 0.5 * f, 1e-3],
                action: Action::from_index(i % 2).unwrap(),
                reward: 1.0,
                next_state: vec![f + 1.0, 0.0, -0.25, 7.0],
                done: i % 5 == 4,
                env_id: (i % 3) as u32,
            })
            .unwrap();
        }
        ds.meta.creation_seed = Some(42);
        ds.meta.manifest = Some("manifest.json".into());
        ds
    }

    #[test]
    fn file_roundtrip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("buf.teabuf");
        let ds = sample(25);
        save(&ds, &path).unwrap();
        assert_eq!(load(&path).unwrap(), ds);
        let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side["creation_seed"], 42);
        assert_eq!(side["variant"], "baseline");
    }

    #[test]
    fn header_and_record_sizes() {
        let bytes = encode(&sample(3));
        assert_eq!(&bytes[..8], b"TEABUF01");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(bytes[12], 0);
        assert_eq!(&bytes[13..17], &4u32.to_le_bytes());
        assert_eq!(&bytes[17..25], &3u64.to_le_bytes());
        assert_eq!(bytes.len(), 25 + 3 * (16 * 4 + 14) + 8);
    }

    #[test]
    fn aug_true_reports_dim_six() {
        let aug = sample(10).augment_with_true_params(&EnvManifest::sample(0, 3, 0)).unwrap();
        let back = decode(&encode(&aug)).unwrap();
        assert_eq!(back.state_dim(), 6);
        assert_eq!(back.variant(), Variant::AugTrue);
    }

    #[test]
    fn truncation_and_corruption_rejected() {
        let bytes = encode(&sample(10));
        for cut in [1, 9, bytes.len() / 2] {
            assert!(decode(&bytes[..bytes.len() - cut]).is_err());
        }
        let mut flipped = bytes.clone();
        flipped[40] ^= 0x01;
        assert!(matches!(decode(&flipped), Err(DatasetError::Checksum { .. })));
        let mut magic = bytes.clone();
        magic[3] = b'X';
        assert!(matches!(decode(&magic), Err(DatasetError::Format(_))));
        let mut version = bytes;
        version[8] = 9;
        assert!(decode(&version).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_bitwise(values in proptest::collection::vec((any::<f64>(), any::<bool>(), 0u32..7), 0..40)) {
            let mut ds = Dataset::baseline();
            for (v, done, env) in values {
                ds.append(Transition {
                    state: vec![v, -v, v * 0.5, 1.0],
                    action: if done { Action::Left } else { Action::Right },
                    reward: v,
                    next_state: vec![0.0, v, 2.0, -v],
                    done,
                    env_id: env,
                }).unwrap();
            }
            let bytes = encode(&ds);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}
