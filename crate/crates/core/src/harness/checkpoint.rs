use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{fingerprint, TrainConfig};
use super::HarnessError;
use crate::autodiff::{
    read_checkpoint, write_checkpoint, AdamState, AutodiffError, CheckpointData, ParamStore,
};
use crate::net::{MmBat, NetConfig};

const META_VERSION: u32 = 1;

/// Run state stored next to the weights. Every random stream in training
/// is derived from `(config.seed, epoch, step)`, so these fields are the
/// complete generator state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub version: u32,
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub data: CheckpointData,
}

impl Checkpoint {
    pub fn capture(
        config: &TrainConfig,
        epoch: usize,
        step: u64,
        store: &ParamStore,
        adam: Option<&AdamState>,
    ) -> Result<Self, HarnessError> {
        let meta = CheckpointMeta {
            version: META_VERSION,
            config: config.clone(),
            epoch,
            step,
        };
        let trailer = serde_json::to_vec(&meta)?;
        Ok(Self {
            meta,
            data: CheckpointData::capture(store, adam, trailer),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, HarnessError> {
        let mut out = Vec::new();
        write_checkpoint(&mut out, &self.data)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HarnessError> {
        let data = read_checkpoint(bytes).map_err(format_error)?;
        let meta: CheckpointMeta = serde_json::from_slice(&data.trailer)
            .map_err(|e| HarnessError::Format(format!("run metadata: {e}")))?;
        if meta.version != META_VERSION {
            return Err(HarnessError::Format(format!(
                "run metadata version {} is not supported",
                meta.version
            )));
        }
        Ok(Self { meta, data })
    }

    /// Fingerprint of the training configuration.
    pub fn fingerprint(&self) -> Result<String, HarnessError> {
        fingerprint(&self.meta.config)
    }

    /// The network described by the stored configuration, with its weights.
    pub fn build_model(&self) -> Result<(MmBat, ParamStore), HarnessError> {
        self.build_model_with(&self.meta.config.net)
    }

    /// Builds a network from `net` and loads the stored weights into it.
    pub fn build_model_with(&self, net: &NetConfig) -> Result<(MmBat, ParamStore), HarnessError> {
        let mut store = ParamStore::new();
        let model = MmBat::new(net, &mut store)?;
        if let Err(e) = self.data.restore_into(&mut store, None) {
            let stored = self.meta.config.net.template.n_joints;
            let message = format_error(e).to_string();
            if stored != model.template.n_joints {
                return Err(HarnessError::Format(format!(
                    "pose head regresses {stored} joint rotations in the checkpoint but {} in the model; {message}",
                    model.template.n_joints
                )));
            }
            return Err(HarnessError::Format(message));
        }
        Ok((model, store))
    }

    /// Optimizer state for continuing the run on `store`.
    pub fn restore_optimizer(&self, store: &mut ParamStore) -> Result<AdamState, HarnessError> {
        let mut adam = AdamState::new(self.meta.config.adam(), store);
        self.data
            .restore_into(store, Some(&mut adam))
            .map_err(format_error)?;
        Ok(adam)
    }
}

fn format_error(e: AutodiffError) -> HarnessError {
    match e {
        AutodiffError::Format { offset: 0, message } => HarnessError::Format(message),
        AutodiffError::Format { offset, message } => {
            HarnessError::Format(format!("{message} (byte {offset})"))
        }
        AutodiffError::Io(e) => HarnessError::Io(e),
        other => HarnessError::Format(other.to_string()),
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), HarnessError> {
    std::fs::write(path, checkpoint.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::TemplateSpec;

    fn micro() -> TrainConfig {
        TrainConfig {
            net: NetConfig::micro(),
            ..TrainConfig::default()
        }
    }

    fn fresh(config: &TrainConfig) -> Checkpoint {
        let mut store = ParamStore::new();
        MmBat::new(&config.net, &mut store).unwrap();
        let adam = AdamState::new(config.adam(), &store);
        Checkpoint::capture(config, 3, 17, &store, Some(&adam)).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let config = TrainConfig {
            learning_rate: 0.1 + 0.2,
            ..micro()
        };
        let ck = fresh(&config);
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_checkpoint(&a, &ck).unwrap();
        let loaded = load_checkpoint(&a).unwrap();
        assert_eq!(loaded, ck);
        save_checkpoint(&b, &loaded).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!((loaded.meta.epoch, loaded.meta.step), (3, 17));
    }

    #[test]
    fn weights_come_back() {
        let config = micro();
        let ck = fresh(&config);
        let (_, store) = ck.build_model().unwrap();
        let mut original = ParamStore::new();
        MmBat::new(&config.net, &mut original).unwrap();
        assert!(store
            .iter()
            .zip(original.iter())
            .all(|(a, b)| a.1.values() == b.1.values()));
    }

    #[test]
    fn joint_count_mismatch_names_the_pose_head() {
        let ck = fresh(&micro());
        let other = NetConfig {
            template: TemplateSpec {
                n_joints: 5,
                ..NetConfig::micro().template
            },
            ..NetConfig::micro()
        };
        match ck.build_model_with(&other) {
            Err(HarnessError::Format(m)) => {
                assert!(m.contains("pose head"), "{m}");
                assert!(m.contains("skeleton_head"), "{m}");
            }
            other => panic!("{:?}", other.err()),
        }
    }

    #[test]
    fn corrupt_metadata_is_a_format_error() {
        let mut ck = fresh(&micro());
        ck.data.trailer = b"{not json".to_vec();
        let bytes = ck.to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(HarnessError::Format(_))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(b"nope"),
            Err(HarnessError::Format(_))
        ));
    }
}
