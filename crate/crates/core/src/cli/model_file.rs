//! Model persistence.
//!
//! A model file is a single line of JSON:
//!
//! ```text
//! {"format":"transcal-model","version":1,"sha256":"<hex>","model":{...}}
//! ```
//!
//! `model` is the canonical serialization of [`ModelFile`] (fields in
//! declaration order, floats in shortest round-trip form) and `sha256` is the
//! digest of exactly those bytes. Any altered byte makes the load fail.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::calibration::{AutoencoderSpec, CalibratedModel, Normalizer, TRANSFER_FROZEN_LAYERS};
use crate::network::{Mlp, TrainConfig};
use crate::{Error, Result};

pub const FORMAT_NAME: &str = "transcal-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub autoencoder: AutoencoderSpec,
    pub normalizer: Normalizer,
    pub base: Mlp,
    /// Absent until a transfer has been run.
    pub calibrated: Option<Mlp>,
    pub n_experiments_used: usize,
    pub init_seed: u64,
    pub base_training: TrainConfig,
    pub transfer_training: Option<TrainConfig>,
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'a str,
    version: u32,
    sha256: String,
    model: &'a RawValue,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvelopeIn<'a> {
    format: String,
    version: u32,
    sha256: String,
    #[serde(borrow)]
    model: &'a RawValue,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ModelFile {
    pub fn validate(&self) -> Result<()> {
        self.autoencoder.validate()?;
        self.normalizer.validate()?;
        for (name, net) in std::iter::once(("base", &self.base)).chain(self.calibrated.iter().map(|c| ("calibrated", c))) {
            let finite = net.layers().iter().all(|l| {
                l.weights().values().iter().chain(l.biases().as_slice()).all(|x| x.is_finite())
            });
            if !finite {
                return Err(Error::Model(format!("{name} network has non-finite parameters")));
            }
        }
        if !self.autoencoder.matches(&self.base) {
            return Err(Error::Model("base network does not match the autoencoder spec".into()));
        }
        if let Some(cal) = &self.calibrated {
            if !self.autoencoder.matches(cal) {
                return Err(Error::Model("calibrated network does not match the autoencoder spec".into()));
            }
            if cal.layers()[..TRANSFER_FROZEN_LAYERS] != self.base.layers()[..TRANSFER_FROZEN_LAYERS] {
                return Err(Error::Model("calibrated network's frozen layers differ from the base".into()));
            }
        }
        Ok(())
    }

    /// The calibrated pair; a base-only file maps sims through the plain autoencoder.
    pub fn calibrated_model(&self) -> CalibratedModel {
        CalibratedModel {
            base: self.base.clone(),
            calibrated: self.calibrated.clone().unwrap_or_else(|| self.base.clone()),
            normalizer: self.normalizer.clone(),
            n_experiments_used: self.n_experiments_used,
        }
    }
}

pub fn save_model(m: &ModelFile) -> Result<Vec<u8>> {
    m.validate()?;
    let payload = serde_json::to_string(m).map_err(|e| Error::Model(e.to_string()))?;
    let raw = RawValue::from_string(payload).map_err(|e| Error::Model(e.to_string()))?;
    let envelope = EnvelopeOut {
        format: FORMAT_NAME,
        version: FORMAT_VERSION,
        sha256: digest(raw.get().as_bytes()),
        model: &raw,
    };
    let mut out = serde_json::to_vec(&envelope).map_err(|e| Error::Model(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn load_model(bytes: &[u8]) -> Result<ModelFile> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Model("not valid UTF-8".into()))?;
    let env: EnvelopeIn<'_> = serde_json::from_str(text).map_err(|e| Error::Model(format!("malformed: {e}")))?;
    if env.format != FORMAT_NAME {
        return Err(Error::Model(format!("unknown format `{}`", env.format)));
    }
    if env.version != FORMAT_VERSION {
        return Err(Error::Version {
            found: env.version,
            expected: FORMAT_VERSION,
        });
    }
    if digest(env.model.get().as_bytes()) != env.sha256 {
        return Err(Error::Model("checksum mismatch".into()));
    }
    let model: ModelFile =
        serde_json::from_str(env.model.get()).map_err(|e| Error::Model(format!("invalid model: {e}")))?;
    model.validate()?;
    Ok(model)
}
