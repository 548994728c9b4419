//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "FLOWTXCK"
//! version  u32
//! header   u64 length + UTF-8 JSON (profile, schema, model config, train config, metrics)
//! params   u64 count, then per array:
//!            u32 name length + name, u32 rank, rank × u64 dims, u64 count, count × f64
//! checksum 32 bytes, SHA-256 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Profile;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{Classifier, ModelConfig};
use crate::sentencing::Schema;
use crate::tensor::Tensor;
use crate::training::{TrainConfig, TrainedModel};

pub const MAGIC: &[u8; 8] = b"FLOWTXCK";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// A trained model together with everything needed to rerun or score it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub config: Option<TrainConfig>,
    pub metrics: Option<MetricsReport>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    profile: Profile,
    schema: Schema,
    model: ModelConfig,
    train_config: Option<TrainConfig>,
    metrics: Option<MetricsReport>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.model.check_compatible()?;
        let header = Header {
            profile: self.model.profile.clone(),
            schema: self.model.schema.clone(),
            model: self.model.classifier.config(),
            train_config: self.config.clone(),
            metrics: self.metrics.clone(),
        };
        let json = serde_json::to_vec(&header)?;

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);

        let named = self.model.classifier.named();
        out.extend_from_slice(&(named.len() as u64).to_le_bytes());
        for (name, t) in named {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&(t.numel() as u64).to_le_bytes());
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(digest.as_slice());
        Ok(out)
    }

    /// Verifies the checksum first, then the magic and version, then decodes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::Integrity(format!("file is truncated ({} bytes)", bytes.len())));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Integrity("checksum mismatch (file is corrupt or truncated)".into()));
        }

        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Integrity("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version { found: version, expected: FORMAT_VERSION });
        }
        let header_len = r.len_u64()?;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Integrity(format!("malformed header: {e}")))?;

        let count = r.len_u64()?;
        let mut arrays = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Integrity("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.len_u64()).collect::<Result<Vec<_>>>()?;
            let n = r.len_u64()?;
            let raw = r.take(n.checked_mul(8).ok_or_else(overflow)?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let t = Tensor::new(&shape, data)
                .map_err(|e| Error::Integrity(format!("parameter `{name}`: {e}")))?;
            if arrays.insert(name.clone(), t).is_some() {
                return Err(Error::Integrity(format!("parameter `{name}` appears twice")));
            }
        }
        if r.pos != body.len() {
            return Err(Error::Integrity(format!("{} trailing bytes", body.len() - r.pos)));
        }

        let model = TrainedModel {
            profile: header.profile,
            schema: header.schema,
            classifier: Classifier::from_named(&header.model, arrays)?,
        };
        model.check_compatible()?;
        Ok(Self { model, config: header.train_config, metrics: header.metrics })
    }
}

fn overflow() -> Error {
    Error::Integrity("length field overflows".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(overflow)?;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Integrity("file is truncated".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len_u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| overflow())
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth, Difficulty};
    use crate::model::{FnnConfig, ModelKind, PllmConfig, LAYER_NORM_EPS};
    use crate::sentencing::fit_schema;

    fn sample(model: ModelConfig) -> Checkpoint {
        let data = synth(40, 2, Difficulty::Separable).unwrap();
        let schema = fit_schema(data.records(), &data.profile).unwrap();
        Checkpoint {
            model: TrainedModel {
                profile: data.profile.clone(),
                schema,
                classifier: Classifier::init(&model, 5).unwrap(),
            },
            config: Some(TrainConfig::defaults_for(ModelKind::Pllm)),
            metrics: None,
        }
    }

    fn pllm(tokens: usize) -> ModelConfig {
        ModelConfig::Pllm(PllmConfig {
            tokens,
            dim: 8,
            heads: 2,
            layers: 1,
            mlp_hidden: 16,
            causal: true,
            ln_eps: LAYER_NORM_EPS,
        })
    }

    #[test]
    fn round_trip_is_exact() {
        for cfg in [pllm(13), ModelConfig::Fnn(FnnConfig { inputs: 13, hidden: vec![4, 4] })] {
            let ck = sample(cfg);
            let bytes = ck.to_bytes().unwrap();
            assert_eq!(&bytes[..8], MAGIC);
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn every_single_byte_corruption_is_detected() {
        let bytes = sample(ModelConfig::Fnn(FnnConfig { inputs: 13, hidden: vec![2] })).to_bytes().unwrap();
        for i in (0..bytes.len()).step_by(7) {
            let mut bad = bytes.clone();
            bad[i] ^= 0x01;
            assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Integrity(_))), "byte {i}");
        }
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = sample(pllm(13)).to_bytes().unwrap();
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Integrity(_))));
        }
    }

    #[test]
    fn newer_version_is_refused() {
        let mut bytes = sample(pllm(13)).to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let n = bytes.len() - DIGEST_LEN;
        let digest = Sha256::digest(&bytes[..n]);
        bytes[n..].copy_from_slice(digest.as_slice());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Version { found: 2, expected: FORMAT_VERSION })
        ));
    }

    #[test]
    fn token_count_must_match_schema() {
        // 13-token model against an 11-feature schema
        let mut ck = sample(pllm(13));
        let ton = crate::dataio::Profile::ton();
        let rows: Vec<_> = (0..3)
            .map(|i| {
                let values = ton
                    .features
                    .iter()
                    .map(|c| (c.name.clone(), format!("{i}")))
                    .collect();
                crate::dataio::FlowRecord::new(i, values, (i % 2) as u8)
            })
            .collect();
        ck.model.schema = fit_schema(&rows, &ton).unwrap();
        assert_eq!(ck.model.schema.len(), 11);
        assert!(matches!(ck.to_bytes(), Err(Error::Incompatible(_))));
    }
}
