//! Versioned model checkpoints: one header line carrying the format version,
//! body length, and SHA-256 of the body, then a JSON body with tensors
//! stored as base64 little-endian `f64`.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Normalizer, SplitConfig};
use crate::error::{Error, Result};
use crate::forecaster::{ModelConfig, ModelParams};
use crate::train::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "HIERLSTM-CKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub normalizer: Normalizer,
    pub split: SplitConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    name: String,
    shape: (usize, usize),
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Body {
    config: ModelConfig,
    tensors: Vec<StoredTensor>,
    metadata: TrainingMetadata,
}

fn encode(data: &[f64]) -> String {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode(name: &str, text: &str) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(text)
        .map_err(|e| Error::Checksum(format!("tensor {name}: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checksum(format!("tensor {name}: {} bytes is not a whole number of f64", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn to_bytes(params: &ModelParams, metadata: &TrainingMetadata) -> Result<Vec<u8>> {
    let body = Body {
        config: params.config,
        tensors: params
            .tensors()
            .into_iter()
            .map(|t| StoredTensor {
                name: t.name,
                shape: t.shape,
                data: encode(t.data),
            })
            .collect(),
        metadata: metadata.clone(),
    };
    let json = serde_json::to_vec_pretty(&body)?;
    let digest = hex(&Sha256::digest(&json));
    let mut out = format!("{MAGIC} v{FORMAT_VERSION} sha256={digest} len={}\n", json.len()).into_bytes();
    out.extend(json);
    Ok(out)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checksum("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Checksum("header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != MAGIC {
        return Err(Error::Checksum(format!("not a checkpoint header: `{header}`")));
    }
    let version: u32 = fields[1]
        .strip_prefix('v')
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checksum(format!("bad version field `{}`", fields[1])))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let digest = fields[2]
        .strip_prefix("sha256=")
        .ok_or_else(|| Error::Checksum("missing digest".into()))?;
    let len: usize = fields[3]
        .strip_prefix("len=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checksum("missing body length".into()))?;
    let body = &bytes[nl + 1..];
    if body.len() != len {
        return Err(Error::Checksum(format!("body is {} bytes, header says {len}", body.len())));
    }
    if hex(&Sha256::digest(body)) != digest {
        return Err(Error::Checksum("body digest does not match header".into()));
    }
    let body: Body = serde_json::from_slice(body)?;

    let mut params = ModelParams::zeros(body.config)?;
    let stored: std::collections::HashMap<&str, &StoredTensor> = body.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    if stored.len() != body.tensors.len() {
        return Err(Error::Checksum("duplicate tensor names".into()));
    }
    for t in params.tensors_mut() {
        let s = stored.get(t.name.as_str()).ok_or_else(|| Error::TensorShape {
            name: t.name.clone(),
            found: "missing".into(),
            expected: format!("{}x{}", t.shape.0, t.shape.1),
        })?;
        let data = decode(&s.name, &s.data)?;
        if s.shape != t.shape || data.len() != t.data.len() {
            return Err(Error::TensorShape {
                name: t.name.clone(),
                found: format!("{}x{}", s.shape.0, s.shape.1),
                expected: format!("{}x{}", t.shape.0, t.shape.1),
            });
        }
        t.data.copy_from_slice(&data);
    }
    if body.tensors.len() != params.tensors().len() {
        return Err(Error::Checksum("checkpoint holds tensors the model does not have".into()));
    }
    Ok(Checkpoint {
        params,
        metadata: body.metadata,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams, metadata: &TrainingMetadata) -> Result<()> {
    std::fs::write(path, to_bytes(params, metadata)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    from_bytes(&std::fs::read(path)?)
}

/// Loads and checks every tensor against the shapes `expected` implies,
/// naming the first tensor that disagrees.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    let want = ModelParams::zeros(*expected)?;
    let have = ckpt.params.tensors();
    for w in want.tensors() {
        match have.iter().find(|h| h.name == w.name) {
            None => {
                return Err(Error::TensorShape {
                    name: w.name,
                    found: "missing".into(),
                    expected: format!("{}x{}", w.shape.0, w.shape.1),
                })
            }
            Some(h) if h.shape != w.shape => {
                return Err(Error::TensorShape {
                    name: w.name,
                    found: format!("{}x{}", h.shape.0, h.shape.1),
                    expected: format!("{}x{}", w.shape.0, w.shape.1),
                })
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = have.iter().find(|h| !want.tensors().iter().any(|w| w.name == h.name)) {
        return Err(Error::TensorShape {
            name: extra.name.clone(),
            found: format!("{}x{}", extra.shape.0, extra.shape.1),
            expected: "absent".into(),
        });
    }
    if ckpt.params.config != *expected {
        return Err(Error::Config(format!(
            "checkpoint config {:?} differs from requested {:?}",
            ckpt.params.config, expected
        )));
    }
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(variant: Variant) -> (ModelParams, TrainingMetadata) {
        let mut cfg = ModelConfig::new(variant, 3);
        cfg.hidden_dim = 4;
        let p = ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let meta = TrainingMetadata {
            seed: 5,
            epochs_run: 2,
            best_epoch: 1,
            normalizer: Normalizer {
                mean: vec![1.0, 2.0, 3.0],
                std: vec![0.1, 0.2, 1.0 / 3.0],
            },
            split: SplitConfig::new(24, 6, 5),
            train: TrainConfig::default(),
        };
        (p, meta)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (p, meta) = sample(Variant::HierLstmAt);
        let back = from_bytes(&to_bytes(&p, &meta).unwrap()).unwrap();
        assert_eq!(back.metadata, meta);
        for (a, b) in p.tensors().iter().zip(back.params.tensors()) {
            assert_eq!(a.name, b.name);
            let bits = |d: &[f64]| d.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.data), bits(b.data));
        }
    }

    #[test]
    fn truncation_fails_the_checksum() {
        let (p, meta) = sample(Variant::StackedLstm);
        let bytes = to_bytes(&p, &meta).unwrap();
        for cut in [bytes.len() - 1, bytes.len() / 2, 10] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Checksum(_))), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        let i = flipped.len() - 20;
        flipped[i] ^= 1;
        assert!(matches!(from_bytes(&flipped), Err(Error::Checksum(_))));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let (p, meta) = sample(Variant::StackedLstm);
        let text = String::from_utf8(to_bytes(&p, &meta).unwrap()).unwrap();
        let bumped = text.replacen(" v1 ", " v9 ", 1);
        assert!(matches!(
            from_bytes(bumped.as_bytes()),
            Err(Error::Version { found: 9, expected: 1 })
        ));
    }

    #[test]
    fn wrong_config_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (p, meta) = sample(Variant::HierLstmAt);
        save_checkpoint(&path, &p, &meta).unwrap();
        let mut other = p.config;
        other.corridors = 4;
        match load_checkpoint_for(&path, &other) {
            Err(Error::TensorShape { name, .. }) => assert_eq!(name, "bottom.w_ix"),
            r => panic!("unexpected {r:?}"),
        }
        let mut other = p.config;
        other.variant = Variant::StackedLstm;
        match load_checkpoint_for(&path, &other) {
            Err(Error::TensorShape { name, .. }) => assert!(name.starts_with("pool.")),
            r => panic!("unexpected {r:?}"),
        }
        assert!(load_checkpoint_for(&path, &p.config).is_ok());
    }
}
