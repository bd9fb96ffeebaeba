//! The sequence neural network: embedding layer, positional attention over
//! the pump-history sequence, MLP head, analytic gradients, and the
//! training loop. The DNN (no sequence) and SNN_V (mean pooling) baselines
//! are configurations of the same network.

mod model;
mod train;

pub use model::{
    accumulate_batch, backward, batch_loss, bce_loss, forward, positional_attention,
    ForwardTrace, Grads, Layer, ModelParams, CHECKPOINT_VERSION, LOSS_EPS,
};
pub use train::{predict, train, EpochLog, TrainOutcome};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::SEQ_NUMERIC_FIELDS;

#[cfg(test)]
mod tests;

/// Model variants: full positional attention, mean pooling, or no sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelMode {
    Dnn,
    SnnV,
    Snn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbeddingMode {
    /// Coin id embeddings learned end to end.
    E2E,
    /// Frozen pre-trained symbol embeddings.
    Pretrained,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub mode: ModelMode,
    pub embedding_mode: EmbeddingMode,
    /// Maximum sequence length N; forced to 0 in DNN mode.
    pub seq_len: usize,
    pub channel_embed_dim: usize,
    pub coin_embed_dim: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// Learning-rate multiplier for the attention matrix. Alpha starts at
    /// zero and its gradients are second-order relative to the MLP's, so it
    /// needs a faster schedule to converge in the same epoch budget.
    pub alpha_lr_scale: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Keep this fraction of negative training samples per epoch
    /// (deterministic per seed); None trains on all negatives.
    pub downsample_negatives: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: ModelMode::Snn,
            embedding_mode: EmbeddingMode::E2E,
            seq_len: 10,
            channel_embed_dim: 8,
            coin_embed_dim: 32,
            hidden: vec![128, 64, 32],
            lr: 1e-3,
            alpha_lr_scale: 10.0,
            batch_size: 256,
            epochs: 30,
            patience: 5,
            seed: 0,
            downsample_negatives: None,
        }
    }
}

impl ModelConfig {
    /// Effective sequence length: DNN degenerates to N = 0.
    pub fn effective_seq_len(&self) -> usize {
        match self.mode {
            ModelMode::Dnn => 0,
            _ => self.seq_len,
        }
    }

    /// Number of sequence feature fields K (coin id plus numeric stats).
    pub fn seq_fields(&self) -> usize {
        1 + SEQ_NUMERIC_FIELDS
    }

    /// Width of the pooled sequence representation h_s.
    pub fn seq_repr_dim(&self) -> usize {
        self.coin_embed_dim + SEQ_NUMERIC_FIELDS
    }
}

/// Writes the raw positional-attention matrix (not exponentiated) as CSV:
/// one row per position, one column per feature field.
pub fn export_attention_heatmap(params: &ModelParams, path: &Path) -> Result<()> {
    let n = params.config.effective_seq_len();
    let k = params.config.seq_fields();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "position")?;
    for j in 0..k {
        write!(out, ",field{j}")?;
    }
    writeln!(out)?;
    for i in 0..n {
        write!(out, "{}", i + 1)?;
        for j in 0..k {
            write!(out, ",{}", params.alpha[i * k + j])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads a heat-map CSV back into an N x K matrix.
pub fn import_attention_heatmap(path: &Path) -> Result<Vec<Vec<f64>>> {
    let content = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in content.lines().skip(1) {
        let row: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap_or(f64::NAN))
            .collect();
        rows.push(row);
    }
    Ok(rows)
}
