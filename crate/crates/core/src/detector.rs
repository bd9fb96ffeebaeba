//! Binary pump-message classifier: logistic regression over TF-IDF vectors,
//! trained by full-batch gradient descent, plus classification metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SparseVector;
use crate::error::{Error, Result};
use crate::eval;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDoc {
    pub vector: SparseVector,
    pub label: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            lr: 0.5,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRegModel {
    /// Format version for the serialized model file.
    pub version: u32,
    /// Hash of the vocabulary the model was fitted against.
    pub vocab_hash: u64,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: LogRegConfig,
    /// (epoch, loss) pairs recorded during training.
    pub trace: Vec<(usize, f64)>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy plus l2*||w||^2/2 at the given parameters.
pub fn logreg_loss(data: &[LabeledDoc], weights: &[f64], bias: f64, l2: f64) -> f64 {
    let n = data.len() as f64;
    let mut loss = 0.0;
    for d in data {
        let z = d.vector.dot_dense(weights) + bias;
        let y = d.label as f64;
        // log(1 + exp(z)) - y*z, computed stably.
        let log1pexp = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += log1pexp - y * z;
    }
    loss / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of `logreg_loss` with respect to (weights, bias).
pub fn logreg_gradient(
    data: &[LabeledDoc],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = data.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for d in data {
        let z = d.vector.dot_dense(weights) + bias;
        let err = sigmoid(z) - d.label as f64;
        for &(i, x) in &d.vector.entries {
            gw[i] += err * x;
        }
        gb += err;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Trains logistic regression by full-batch gradient descent. Deterministic:
/// weights start at zero and the batch is processed in input order.
pub fn train_logreg(
    data: &[LabeledDoc],
    dim: usize,
    config: &LogRegConfig,
    vocab_hash: u64,
) -> Result<LogRegModel> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let has_pos = data.iter().any(|d| d.label == 1);
    let has_neg = data.iter().any(|d| d.label == 0);
    if !has_pos || !has_neg {
        return Err(Error::SingleClassData);
    }
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (gw, gb) = logreg_gradient(data, &weights, bias, config.l2);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= config.lr * g;
        }
        bias -= config.lr * gb;
        trace.push((epoch, logreg_loss(data, &weights, bias, config.l2)));
    }
    Ok(LogRegModel {
        version: 1,
        vocab_hash,
        weights,
        bias,
        config: config.clone(),
        trace,
    })
}

pub fn predict_proba(model: &LogRegModel, vector: &SparseVector) -> f64 {
    sigmoid(vector.dot_dense(&model.weights) + model.bias)
}

/// Default decision threshold, chosen low to catch as many pump messages as
/// possible.
pub const DEFAULT_THRESHOLD: f64 = 0.2;

pub fn classify(model: &LogRegModel, vector: &SparseVector, threshold: f64) -> u8 {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    u8::from(predict_proba(model, vector) >= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub threshold: f64,
}

/// Precision/recall/F1 at the given threshold plus rank-based AUC over the
/// raw probabilities.
pub fn classification_report(
    probs: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ClassificationReport> {
    assert_eq!(probs.len(), labels.len());
    let auc = eval::auc(probs, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &y) in probs.iter().zip(labels) {
        let pred = p >= threshold;
        match (pred, y) {
            (true, 1) => tp += 1,
            (true, 0) => fp += 1,
            (false, 1) => fn_ += 1,
            _ => {}
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationReport {
        precision,
        recall,
        f1,
        auc,
        threshold,
    })
}

pub fn save_model(model: &LogRegModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), model)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LogRegModel> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
