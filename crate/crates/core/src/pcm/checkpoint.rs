//! JSON checkpoints of the estimator weights and, optionally, optimizer state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::params::PcmParams;
use crate::error::{Result, SimError};

pub const CHECKPOINT_FORMAT: &str = "sfcomp-pcm";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Column-major.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamRecord {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<TensorRecord>,
    pub second: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub hidden: usize,
    /// Episodes of training behind these weights.
    #[serde(default)]
    pub episodes: u64,
    pub tensors: Vec<TensorRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamRecord>,
}

fn records(p: &PcmParams) -> Vec<TensorRecord> {
    PcmParams::tensor_names()
        .into_iter()
        .zip(p.shapes())
        .zip(p.tensors())
        .map(|((name, (rows, cols)), data)| TensorRecord {
            name: name.to_string(),
            rows,
            cols,
            data: data.to_vec(),
        })
        .collect()
}

fn restore(hidden: usize, recs: &[TensorRecord]) -> Result<PcmParams> {
    let mut p = PcmParams::zeros(hidden);
    if recs.len() != PcmParams::tensor_names().len() {
        return Err(SimError::Checkpoint(format!("expected {} tensors, found {}", PcmParams::tensor_names().len(), recs.len())));
    }
    let shapes = p.shapes();
    for (((rec, name), shape), dst) in recs
        .iter()
        .zip(PcmParams::tensor_names())
        .zip(shapes)
        .zip(p.tensors_mut())
    {
        if rec.name != name {
            return Err(SimError::Checkpoint(format!("tensor {} found where {name} was expected", rec.name)));
        }
        if (rec.rows, rec.cols) != shape || rec.data.len() != dst.len() {
            return Err(SimError::Checkpoint(format!(
                "tensor {name} has shape {}x{} ({} values), expected {}x{}",
                rec.rows,
                rec.cols,
                rec.data.len(),
                shape.0,
                shape.1
            )));
        }
        dst.copy_from_slice(&rec.data);
    }
    if !p.is_finite() {
        return Err(SimError::Checkpoint("non-finite weight".into()));
    }
    Ok(p)
}

impl Checkpoint {
    pub fn new(params: &PcmParams, adam: Option<&AdamState>, config_hash: &str, episodes: u64) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            hidden: params.hidden(),
            episodes,
            tensors: records(params),
            adam: adam.map(|a| AdamRecord {
                config: a.config,
                step: a.step,
                first: records(&a.first),
                second: records(&a.second),
            }),
        }
    }

    pub fn params(&self) -> Result<PcmParams> {
        self.check_header()?;
        restore(self.hidden, &self.tensors)
    }

    pub fn adam_state(&self) -> Result<Option<AdamState>> {
        self.check_header()?;
        self.adam
            .as_ref()
            .map(|a| {
                Ok(AdamState {
                    config: a.config,
                    step: a.step,
                    first: restore(self.hidden, &a.first)?,
                    second: restore(self.hidden, &a.second)?,
                })
            })
            .transpose()
    }

    /// Fail unless the checkpoint was produced under `hash`.
    pub fn require_hash(&self, hash: &str) -> Result<()> {
        if self.config_hash != hash {
            return Err(SimError::Checkpoint(format!(
                "checkpoint config hash {} does not match current configuration {hash}",
                self.config_hash
            )));
        }
        Ok(())
    }

    fn check_header(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(SimError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(SimError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.hidden == 0 {
            return Err(SimError::Checkpoint("hidden width is zero".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| SimError::Checkpoint(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| SimError::Checkpoint(e.to_string()))?;
        c.check_header()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pcm::params::InitConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> PcmParams {
        let init = InitConfig {
            obs_head_scale: 1.0,
            eps_head_scale: 1.0,
        };
        PcmParams::init(6, &init, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let p = sample();
        let mut adam = AdamState::new(&p, AdamConfig::default());
        adam.first.fill(1.0 / 3.0);
        adam.step = 17;
        let c = Checkpoint::new(&p, Some(&adam), "abc", 240);
        let back = Checkpoint::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back.params().unwrap(), p);
        assert_eq!(back.adam_state().unwrap().unwrap(), adam);
        assert_eq!(back.episodes, 240);
    }

    #[test]
    fn hash_mismatch_rejected() {
        let c = Checkpoint::new(&sample(), None, "abc", 0);
        assert!(c.require_hash("abc").is_ok());
        assert!(matches!(c.require_hash("xyz"), Err(SimError::Checkpoint(_))));
    }

    #[test]
    fn corrupted_shape_rejected() {
        let mut c = Checkpoint::new(&sample(), None, "abc", 0);
        c.tensors[4].data.pop();
        assert!(c.params().is_err());
        let mut c = Checkpoint::new(&sample(), None, "abc", 0);
        c.tensors.swap(0, 1);
        assert!(c.params().is_err());
        let mut c = Checkpoint::new(&sample(), None, "abc", 0);
        c.version = 9;
        assert!(Checkpoint::from_json(&c.to_json().unwrap()).is_err());
    }
}
