use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::auc;
use crate::features::Sample;

use super::model::{accumulate_batch, forward, Grads, ModelParams};
use super::ModelMode;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with lazy (sparse) embedding updates: rows that never receive a
/// gradient keep both their value and their moment state untouched.
struct Adam {
    t: u64,
    chan_m: Vec<f64>,
    chan_v: Vec<f64>,
    coin_m: Vec<f64>,
    coin_v: Vec<f64>,
    alpha_m: Vec<f64>,
    alpha_v: Vec<f64>,
    layer_m: Vec<(Vec<f64>, Vec<f64>)>,
    layer_v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        let lz = |l: &super::model::Layer| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]);
        Adam {
            t: 0,
            chan_m: vec![0.0; params.channel_table.len()],
            chan_v: vec![0.0; params.channel_table.len()],
            coin_m: vec![0.0; params.coin_table.len()],
            coin_v: vec![0.0; params.coin_table.len()],
            alpha_m: vec![0.0; params.alpha.len()],
            alpha_v: vec![0.0; params.alpha.len()],
            layer_m: params.layers.iter().map(lz).collect(),
            layer_v: params.layers.iter().map(lz).collect(),
        }
    }

    fn step_slice(
        lr: f64,
        corr1: f64,
        corr2: f64,
        p: &mut [f64],
        g: &[f64],
        m: &mut [f64],
        v: &mut [f64],
    ) {
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let mh = m[i] / corr1;
            let vh = v[i] / corr2;
            p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &Grads) {
        self.t += 1;
        let lr = params.config.lr;
        let corr1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let corr2 = 1.0 - ADAM_BETA2.powi(self.t as i32);

        let ce = params.config.channel_embed_dim;
        for (&row, g) in &grads.channel_rows {
            let a = row * ce;
            Adam::step_slice(
                lr,
                corr1,
                corr2,
                &mut params.channel_table[a..a + ce],
                g,
                &mut self.chan_m[a..a + ce],
                &mut self.chan_v[a..a + ce],
            );
        }
        if !params.coin_frozen {
            let de = params.config.coin_embed_dim;
            for (&row, g) in &grads.coin_rows {
                let a = row * de;
                Adam::step_slice(
                    lr,
                    corr1,
                    corr2,
                    &mut params.coin_table[a..a + de],
                    g,
                    &mut self.coin_m[a..a + de],
                    &mut self.coin_v[a..a + de],
                );
            }
        }
        // Attention only learns in full SNN mode; SNN_V keeps alpha at 0,
        // which makes the pooling an exact masked mean.
        if params.config.mode == ModelMode::Snn && !params.alpha.is_empty() {
            Adam::step_slice(
                lr * params.config.alpha_lr_scale,
                corr1,
                corr2,
                &mut params.alpha,
                &grads.alpha,
                &mut self.alpha_m,
                &mut self.alpha_v,
            );
        }
        for (li, layer) in params.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[li];
            let (mw, mb) = &mut self.layer_m[li];
            let (vw, vb) = &mut self.layer_v[li];
            Adam::step_slice(lr, corr1, corr2, &mut layer.w, gw, mw, vw);
            Adam::step_slice(lr, corr1, corr2, &mut layer.b, gb, mb, vb);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub samples_seen: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

impl TrainOutcome {
    pub fn write_log(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for entry in &self.log {
            serde_json::to_writer(&mut out, entry)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Scores samples; returns probabilities and how many samples used the
/// unknown-coin fallback row.
pub fn predict(params: &ModelParams, samples: &[Sample]) -> (Vec<f64>, usize) {
    let mut scores = Vec::with_capacity(samples.len());
    let mut unknown = 0;
    for s in samples {
        let trace = forward(params, s);
        if trace.unknown_coin {
            unknown += 1;
        }
        scores.push(trace.y_hat);
    }
    (scores, unknown)
}

fn val_auc(params: &ModelParams, val: &[Sample]) -> f64 {
    let (scores, _) = predict(params, val);
    let labels: Vec<u8> = val.iter().map(|s| s.label).collect();
    auc(&scores, &labels).unwrap_or(f64::NAN)
}

/// Mini-batch Adam with early stopping on validation AUC. Returns the
/// parameters from the best validation epoch.
pub fn train(mut params: ModelParams, train_set: &[Sample], val: &[Sample]) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !train_set.iter().any(|s| s.label == 1) || train_set.iter().all(|s| s.label == 1) {
        return Err(Error::SingleClassData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.config.seed.wrapping_add(0x5eed));
    let mut adam = Adam::new(&params);

    let positives: Vec<usize> = (0..train_set.len())
        .filter(|&i| train_set[i].label == 1)
        .collect();
    let negatives: Vec<usize> = (0..train_set.len())
        .filter(|&i| train_set[i].label == 0)
        .collect();

    let mut best_params = params.clone();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 0..params.config.epochs {
        let mut indices = positives.clone();
        match params.config.downsample_negatives {
            Some(frac) if frac < 1.0 => {
                for &i in &negatives {
                    if rng.gen_bool(frac) {
                        indices.push(i);
                    }
                }
            }
            _ => indices.extend_from_slice(&negatives),
        }
        indices.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut seen = 0;
        for chunk in indices.chunks(params.config.batch_size.max(1)) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let mut grads = Grads::zeros(&params);
            let loss = accumulate_batch(&params, &batch, &mut grads);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            adam.step(&mut params, &grads);
        }
        let train_loss = epoch_loss / seen as f64;
        let auc = if val.is_empty() { f64::NAN } else { val_auc(&params, val) };
        log.push(EpochLog { epoch, train_loss, val_auc: auc, samples_seen: seen });

        if val.is_empty() {
            best_params = params.clone();
            best_epoch = epoch;
            continue;
        }
        if auc > best_auc {
            best_auc = auc;
            best_epoch = epoch;
            best_params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= params.config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        log,
        best_epoch,
        best_val_auc: if val.is_empty() { f64::NAN } else { best_auc },
    })
}
