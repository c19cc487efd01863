//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `ARUC`, format version (u32), config JSON
//! length (u64) and bytes, block count (u32), then per parameter block its
//! name length (u32), name, value count (u64) and f64 values in declaration
//! order. A trailing flag byte says whether optimiser state follows: epochs
//! completed (u64), best validation loss, Adam step (u64), beta1, beta2, eps,
//! then the first and second moments laid out like the parameters.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::aru::ByteReader;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::train::{AdamState, TrainState};

const MAGIC: &[u8; 4] = b"ARUC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// Present for resumable checkpoints.
    pub train: Option<TrainState>,
}

fn put_blocks(out: &mut Vec<u8>, params: &ModelParams) {
    let blocks = params.blocks();
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, values) in blocks {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_blocks(r: &mut ByteReader<'_>, into: &mut ModelParams) -> Result<()> {
    let count = r.u32()? as usize;
    let mut blocks = into.blocks_mut();
    if count != blocks.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter blocks, found {count}",
            blocks.len()
        )));
    }
    for (name, values) in blocks.iter_mut() {
        let len = r.u32()? as usize;
        let got = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?;
        if got != name.as_str() {
            return Err(Error::Checkpoint(format!("expected block '{name}', found '{got}'")));
        }
        let n = r.u64()? as usize;
        if n != values.len() {
            return Err(Error::Checkpoint(format!(
                "block '{name}' has {n} values, config implies {}",
                values.len()
            )));
        }
        for v in values.iter_mut() {
            *v = r.f64()?;
        }
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint { model, train: None }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config = serde_json::to_vec(&self.model.config)?;
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(&config);
        put_blocks(&mut out, &self.model.params);
        match &self.train {
            None => out.push(0),
            Some(t) => {
                out.push(1);
                out.extend_from_slice(&(t.epochs_done as u64).to_le_bytes());
                out.extend_from_slice(&t.best_val.to_le_bytes());
                out.extend_from_slice(&t.adam.step.to_le_bytes());
                for v in [t.adam.beta1, t.adam.beta2, t.adam.eps] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                put_blocks(&mut out, &t.adam.m);
                put_blocks(&mut out, &t.adam.v);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let len = r.u64()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(len)?)?;
        config.validate()?;
        let mut params = ModelParams::zeros(&config);
        read_blocks(&mut r, &mut params)?;
        let train = match r.take(1)?[0] {
            0 => None,
            1 => {
                let epochs_done = r.u64()? as usize;
                let best_val = r.f64()?;
                let step = r.u64()?;
                let (beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?);
                let mut m = params.zeros_like();
                read_blocks(&mut r, &mut m)?;
                let mut v = params.zeros_like();
                read_blocks(&mut r, &mut v)?;
                Some(TrainState {
                    epochs_done,
                    best_val,
                    adam: AdamState {
                        m,
                        v,
                        step,
                        beta1,
                        beta2,
                        eps,
                    },
                })
            }
            other => return Err(Error::Checkpoint(format!("bad optimiser flag {other}"))),
        };
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes in checkpoint".into()));
        }
        Ok(Checkpoint {
            model: Model::from_parts(config, params)?,
            train,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CategoricalFeature, FeatureSchema, Head, Preset};

    fn model(head: Head) -> Model {
        let schema = FeatureSchema {
            categorical: vec![CategoricalFeature::with_default_dim("hour", 24)],
            continuous: vec!["temp".into()],
        };
        let cfg = ModelConfig::from_preset(Preset::Small, 6, 3, schema, head, vec![1.0, 0.95], 0.1).unwrap();
        Model::new(cfg, 11).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for head in [Head::Baseline, Head::Aru, Head::AruDirect] {
            let ck = Checkpoint::new(model(head));
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            assert_eq!(back, ck);
        }
    }

    #[test]
    fn optimiser_state_round_trips() {
        let m = model(Head::Aru);
        let mut adam = AdamState::new(&m.params);
        adam.step = 17;
        adam.m.mu_head.bias[0] = 0.25;
        adam.v.decoder[1].weight[3] = 1e-9;
        let ck = Checkpoint {
            model: m,
            train: Some(TrainState {
                adam,
                epochs_done: 4,
                best_val: 0.5,
            }),
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = Checkpoint::new(model(Head::Aru)).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut version = bytes;
        version[4] = 9;
        assert!(Checkpoint::from_bytes(&version).is_err());
    }

    #[test]
    fn digest_changes_with_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let mut ck = Checkpoint::new(model(Head::Baseline));
        ck.save(&p).unwrap();
        let d1 = file_digest(&p).unwrap();
        assert_eq!(d1.len(), 64);
        assert_eq!(d1, file_digest(&p).unwrap());
        ck.model.params.mu_head.bias[0] += 1.0;
        ck.save(&p).unwrap();
        assert_ne!(d1, file_digest(&p).unwrap());
    }
}
