//! Declarative pipeline configuration: a TOML file with one section per
//! stage, environment-variable overrides for the two root paths, and
//! command-line flags taking precedence over both.

use std::path::{Path, PathBuf};

use pumpwatch::detector::LogRegConfig;
use pumpwatch::embed::EmbedConfig;
use pumpwatch::error::{Error, Result};
use pumpwatch::snn::ModelConfig;
use pumpwatch::synth::WorldConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Global seed; stage configs that carry their own seed inherit this
    /// one unless the file sets them explicitly.
    pub seed: u64,
    /// Directory holding the input fixtures (messages, candles, lexicons).
    pub data_dir: PathBuf,
    /// Directory receiving every artifact the pipeline writes.
    pub out_dir: PathBuf,
    /// Minimum document frequency for the detector vocabulary.
    pub min_df: u32,
    /// History length used when building sequence samples.
    pub max_seq_len: usize,
    pub synth: WorldConfig,
    pub detector: LogRegConfig,
    pub embed: EmbedConfig,
    pub model: ModelConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            min_df: 2,
            max_seq_len: 10,
            synth: WorldConfig::default(),
            detector: LogRegConfig::default(),
            embed: EmbedConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Loads the file if given, then applies `PUMPWATCH_DATA_DIR` /
    /// `PUMPWATCH_OUT_DIR` and the global seed cascade.
    pub fn load(path: Option<&Path>, seed_flag: Option<u64>) -> Result<Self> {
        let mut cfg: PipelineConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::MissingInput(format!("config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::ConfigError(e.to_string()))?
            }
            None => PipelineConfig::default(),
        };
        if let Ok(dir) = std::env::var("PUMPWATCH_DATA_DIR") {
            cfg.data_dir = PathBuf::from(dir);
        }
        if let Ok(dir) = std::env::var("PUMPWATCH_OUT_DIR") {
            cfg.out_dir = PathBuf::from(dir);
        }
        if let Some(seed) = seed_flag {
            cfg.seed = seed;
        }
        // The global seed cascades into every stage.
        cfg.synth.seed = cfg.seed;
        cfg.detector.seed = cfg.seed;
        cfg.embed.seed = cfg.seed;
        cfg.model.seed = cfg.seed;
        Ok(cfg)
    }
}

/// Fails fast with `MissingInput` before a stage does any work.
pub fn require(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::MissingInput(path.display().to_string()))
    }
}
