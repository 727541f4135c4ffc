use std::path::{Path, PathBuf};

use mmbat::harness::TrainConfig;
use mmbat::radar::SimulationConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Options of the `eval` command that are not part of the network.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub oracle_crop: bool,
    pub dump_frames: bool,
    pub force: bool,
    /// Seed of the point sampling inside each crop.
    pub crop_seed: u64,
}

/// Everything a command reads, resolved from the optional `--config` file
/// and then the command-line flags. Each run writes this back next to its
/// outputs, so `--config <that file>` repeats the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides every per-section seed when set.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Number of sequences written by `simulate`; sequence `i` uses seed `seed + i`.
    pub sequences: usize,
    pub simulation: SimulationConfig,
    /// `None` lets `eval` take the configuration stored in the checkpoint.
    pub train: Option<TrainConfig>,
    pub eval: EvalSettings,
    pub data: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: None,
            sequences: 1,
            simulation: SimulationConfig::default(),
            train: None,
            eval: EvalSettings::default(),
            data: Vec::new(),
            checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Pushes the global seed into every section that has one.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.simulation.seed = seed;
            self.eval.crop_seed = seed;
            if let Some(t) = &mut self.train {
                t.seed = seed;
            }
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn write(&self, dir: &Path, command: &str) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("{command}.config.json"));
        let json =
            serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(&path, json + "\n")
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
