use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::features::{IdMaps, NormStats, Sample, SEQ_NUMERIC_FIELDS, UNKNOWN_COIN_ID};

use super::ModelConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Probability clamp for the NLL loss.
pub const LOSS_EPS: f64 = 1e-7;

/// One dense layer; weights stored row-major as `w[i * out + o]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub input: usize,
    pub output: usize,
}

impl Layer {
    fn glorot(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let w = (0..input * output)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Layer { w, b: vec![0.0; output], input, output }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.output, 0.0);
        for i in 0..self.input {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = &self.w[i * self.output..(i + 1) * self.output];
            for (o, w) in row.iter().enumerate() {
                out[o] += xi * w;
            }
        }
        for (o, b) in self.b.iter().enumerate() {
            out[o] += b;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub version: u32,
    pub config: ModelConfig,
    pub channel_rows: usize,
    pub coin_rows: usize,
    pub channel_numeric_len: usize,
    pub target_numeric_len: usize,
    /// channel_rows x channel_embed_dim, row-major.
    pub channel_table: Vec<f64>,
    /// coin_rows x coin_embed_dim, row-major; shared by target and sequence.
    pub coin_table: Vec<f64>,
    /// When true (pretrained mode) the coin table receives no updates.
    pub coin_frozen: bool,
    /// Positional attention matrix, N x K, zero-initialised.
    pub alpha: Vec<f64>,
    pub layers: Vec<Layer>,
    /// Normalization stats frozen from the training split, carried so a
    /// checkpoint is self-contained for scoring raw samples.
    pub norm: Option<NormStats>,
}

impl ModelParams {
    pub fn init(
        config: ModelConfig,
        channel_rows: usize,
        coin_rows: usize,
        channel_numeric_len: usize,
        target_numeric_len: usize,
    ) -> Result<Self> {
        if channel_rows == 0 || coin_rows < 2 {
            return Err(Error::ConfigError(
                "id tables need at least the reserved rows".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, 0.01).expect("valid stddev");
        let channel_table: Vec<f64> = (0..channel_rows * config.channel_embed_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let coin_table: Vec<f64> = (0..coin_rows * config.coin_embed_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let n = config.effective_seq_len();
        let k = config.seq_fields();
        let alpha = vec![0.0; n * k];

        let in_dim = config.channel_embed_dim
            + channel_numeric_len
            + config.coin_embed_dim
            + target_numeric_len
            + config.seq_repr_dim();
        let mut layers = Vec::new();
        let mut prev = in_dim;
        for &h in &config.hidden {
            layers.push(Layer::glorot(prev, h, &mut rng));
            prev = h;
        }
        layers.push(Layer::glorot(prev, 1, &mut rng));

        Ok(ModelParams {
            version: CHECKPOINT_VERSION,
            config,
            channel_rows,
            coin_rows,
            channel_numeric_len,
            target_numeric_len,
            channel_table,
            coin_table,
            coin_frozen: false,
            alpha,
            layers,
            norm: None,
        })
    }

    /// Overwrites coin rows with pre-trained symbol vectors and freezes the
    /// table. Symbols absent from the table keep their random init.
    pub fn load_pretrained(&mut self, table: &EmbeddingTable, ids: &IdMaps) -> Result<usize> {
        if table.dim != self.config.coin_embed_dim {
            return Err(Error::ConfigError(format!(
                "pretrained dim {} != coin_embed_dim {}",
                table.dim, self.config.coin_embed_dim
            )));
        }
        let mut found = 0;
        for (coin, id) in ids.coins() {
            if let Some(vec) = table.vector(coin) {
                let d = self.config.coin_embed_dim;
                self.coin_table[id * d..(id + 1) * d].copy_from_slice(vec);
                found += 1;
            }
        }
        self.coin_frozen = true;
        Ok(found)
    }

    pub fn input_dim(&self) -> usize {
        self.config.channel_embed_dim
            + self.channel_numeric_len
            + self.config.coin_embed_dim
            + self.target_numeric_len
            + self.config.seq_repr_dim()
    }

    fn coin_row(&self, id: usize) -> (usize, bool) {
        if id >= self.coin_rows {
            (UNKNOWN_COIN_ID, true)
        } else {
            (id, false)
        }
    }

    fn channel_row(&self, id: usize) -> usize {
        if id >= self.channel_rows {
            crate::features::UNKNOWN_CHANNEL_ID
        } else {
            id
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let params: ModelParams = serde_json::from_reader(std::io::BufReader::new(file))?;
        if params.version != CHECKPOINT_VERSION {
            return Err(Error::ConfigError(format!(
                "unsupported checkpoint version {}",
                params.version
            )));
        }
        Ok(params)
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Concatenated input [h_c | h_t | h_s].
    pub x: Vec<f64>,
    /// Pooled sequence representation.
    pub h_s: Vec<f64>,
    /// Attention weights w_ij, N x K (zero at masked positions).
    pub weights: Vec<f64>,
    /// Coin table row actually used per sequence position.
    pub seq_rows: Vec<usize>,
    /// Target coin row actually used.
    pub target_row: usize,
    /// Post-ReLU activations per hidden layer.
    pub activations: Vec<Vec<f64>>,
    pub y_hat: f64,
    pub unknown_coin: bool,
}

/// Masked, position-weighted field pooling. Each of the K fields is pooled
/// independently with weights exp(alpha_ij) normalised over unmasked
/// positions; an empty sequence pools to the zero vector.
pub fn positional_attention<'a>(
    alpha: &[f64],
    mask: &[bool],
    fields: &dyn Fn(usize, usize) -> &'a [f64],
    field_widths: &[usize],
    h_s: &mut [f64],
    weights: &mut [f64],
) {
    let n = mask.len();
    let k = field_widths.len();
    for v in h_s.iter_mut() {
        *v = 0.0;
    }
    for v in weights.iter_mut() {
        *v = 0.0;
    }
    if n == 0 || !mask.iter().any(|&m| m) {
        return;
    }
    let mut offset = 0;
    for (j, &width) in field_widths.iter().enumerate() {
        let mut denom = 0.0;
        for i in 0..n {
            if mask[i] {
                denom += (alpha[i * k + j]).exp();
            }
        }
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            let w = (alpha[i * k + j]).exp() / denom;
            weights[i * k + j] = w;
            let f = fields(i, j);
            for (d, &v) in f.iter().enumerate() {
                h_s[offset + d] += w * v;
            }
        }
        offset += width;
    }
}

pub fn forward(params: &ModelParams, sample: &Sample) -> ForwardTrace {
    let cfg = &params.config;
    let ce = cfg.channel_embed_dim;
    let de = cfg.coin_embed_dim;
    let n = cfg.effective_seq_len();
    let k = cfg.seq_fields();

    let mut x = Vec::with_capacity(params.input_dim());
    let chan_row = params.channel_row(sample.channel_id);
    x.extend_from_slice(&params.channel_table[chan_row * ce..(chan_row + 1) * ce]);
    x.extend_from_slice(&sample.channel_numeric);

    let (target_row, mut unknown_coin) = params.coin_row(sample.target_coin_id);
    x.extend_from_slice(&params.coin_table[target_row * de..(target_row + 1) * de]);
    x.extend_from_slice(&sample.target_numeric);

    // Sequence fields: field 0 is the coin embedding, fields 1..K scalars.
    let seq_len = n.min(sample.sequence.len());
    let mut seq_rows = Vec::with_capacity(n);
    let mut mask = vec![false; n];
    for i in 0..n {
        if i < seq_len {
            let item = &sample.sequence[i];
            let (row, unk) = params.coin_row(item.coin_id);
            unknown_coin |= unk && sample.seq_mask[i];
            seq_rows.push(row);
            mask[i] = sample.seq_mask[i];
        } else {
            seq_rows.push(crate::features::PAD_COIN_ID);
        }
    }

    let mut field_widths = vec![de];
    field_widths.extend(std::iter::repeat(1).take(SEQ_NUMERIC_FIELDS));
    let mut h_s = vec![0.0; cfg.seq_repr_dim()];
    let mut weights = vec![0.0; n * k];
    {
        let fields = |i: usize, j: usize| -> &[f64] {
            if j == 0 {
                let row = seq_rows[i];
                &params.coin_table[row * de..(row + 1) * de]
            } else {
                std::slice::from_ref(&sample.sequence[i].numeric[j - 1])
            }
        };
        positional_attention(&params.alpha, &mask, &fields, &field_widths, &mut h_s, &mut weights);
    }
    x.extend_from_slice(&h_s);
    debug_assert_eq!(x.len(), params.input_dim());

    // MLP with ReLU hiddens and a sigmoid scalar head.
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(params.layers.len() - 1);
    let mut cur = x.clone();
    let mut buf = Vec::new();
    for layer in &params.layers[..params.layers.len() - 1] {
        layer.forward(&cur, &mut buf);
        for v in buf.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        activations.push(buf.clone());
        std::mem::swap(&mut cur, &mut buf);
    }
    let last = params.layers.last().expect("at least one layer");
    last.forward(&cur, &mut buf);
    let z = buf[0];
    let y_hat = 1.0 / (1.0 + (-z).exp());

    ForwardTrace { x, h_s, weights, seq_rows, target_row, activations, y_hat, unknown_coin }
}

/// Clamped negative log likelihood for one sample.
pub fn bce_loss(y_hat: f64, label: u8) -> f64 {
    let p = y_hat.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean loss over a batch, forward passes only. Independent of the
/// backward pass; used as the finite-difference oracle.
pub fn batch_loss(params: &ModelParams, samples: &[Sample]) -> f64 {
    let mut total = 0.0;
    for s in samples {
        let trace = forward(params, s);
        total += bce_loss(trace.y_hat, s.label);
    }
    total / samples.len() as f64
}

/// Accumulated gradients. Embedding grads are sparse: only touched rows
/// appear, so untouched rows provably receive zero updates.
#[derive(Debug, Default)]
pub struct Grads {
    pub channel_rows: BTreeMap<usize, Vec<f64>>,
    pub coin_rows: BTreeMap<usize, Vec<f64>>,
    pub alpha: Vec<f64>,
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Grads {
    pub fn zeros(params: &ModelParams) -> Self {
        Grads {
            channel_rows: BTreeMap::new(),
            coin_rows: BTreeMap::new(),
            alpha: vec![0.0; params.alpha.len()],
            layers: params
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }
}

/// Analytic gradients for one sample, scaled by `scale` and accumulated
/// into `grads`. Returns the sample loss.
pub fn backward(
    params: &ModelParams,
    sample: &Sample,
    trace: &ForwardTrace,
    scale: f64,
    grads: &mut Grads,
) -> f64 {
    let cfg = &params.config;
    let ce = cfg.channel_embed_dim;
    let de = cfg.coin_embed_dim;
    let n = cfg.effective_seq_len();
    let k = cfg.seq_fields();
    let loss = bce_loss(trace.y_hat, sample.label);

    // d loss / d z for sigmoid + NLL; the clamp only bites at saturation
    // where this is the correct subgradient anyway.
    let mut delta = vec![(trace.y_hat - sample.label as f64) * scale];

    // Backprop through the MLP.
    let mut grad_x = vec![0.0; 0];
    for (li, layer) in params.layers.iter().enumerate().rev() {
        let input: &[f64] = if li == 0 {
            &trace.x
        } else {
            &trace.activations[li - 1]
        };
        let (gw, gb) = &mut grads.layers[li];
        let mut next_delta = vec![0.0; layer.input];
        for i in 0..layer.input {
            let xi = input[i];
            let row = i * layer.output;
            let mut acc = 0.0;
            for o in 0..layer.output {
                let d = delta[o];
                gw[row + o] += xi * d;
                acc += layer.w[row + o] * d;
            }
            next_delta[i] = acc;
        }
        for o in 0..layer.output {
            gb[o] += delta[o];
        }
        if li > 0 {
            // ReLU mask from the stored activations.
            for (i, nd) in next_delta.iter_mut().enumerate() {
                if trace.activations[li - 1][i] <= 0.0 {
                    *nd = 0.0;
                }
            }
            delta = next_delta;
        } else {
            grad_x = next_delta;
        }
    }

    // Split grad_x back into the input fields.
    let mut off = 0;
    let chan_row = params.channel_row(sample.channel_id);
    let entry = grads
        .channel_rows
        .entry(chan_row)
        .or_insert_with(|| vec![0.0; ce]);
    for d in 0..ce {
        entry[d] += grad_x[off + d];
    }
    off += ce + params.channel_numeric_len;

    if !params.coin_frozen {
        let entry = grads
            .coin_rows
            .entry(trace.target_row)
            .or_insert_with(|| vec![0.0; de]);
        for d in 0..de {
            entry[d] += grad_x[off + d];
        }
    }
    off += de + params.target_numeric_len;

    // Attention block: quotient rule through the normalised pooling.
    let g_hs = &grad_x[off..off + cfg.seq_repr_dim()];
    for i in 0..n {
        let w0 = trace.weights[i * k];
        if w0 == 0.0 && trace.weights[i * k + 1..i * k + k].iter().all(|&w| w == 0.0) {
            continue; // masked position
        }
        // Field 0: coin embedding.
        let row = trace.seq_rows[i];
        let g0 = &g_hs[0..de];
        if !params.coin_frozen && w0 > 0.0 {
            let entry = grads.coin_rows.entry(row).or_insert_with(|| vec![0.0; de]);
            for d in 0..de {
                entry[d] += w0 * g0[d];
            }
        }
        if !grads.alpha.is_empty() {
            // d h_s^j / d alpha_ij = w_ij (h_i^j - h_s^j)
            let emb = &params.coin_table[row * de..(row + 1) * de];
            let mut dot = 0.0;
            for d in 0..de {
                dot += g0[d] * (emb[d] - trace.h_s[d]);
            }
            grads.alpha[i * k] += w0 * dot;
            for j in 1..k {
                let wij = trace.weights[i * k + j];
                let h_ij = sample.sequence[i].numeric[j - 1];
                let h_sj = trace.h_s[de + j - 1];
                grads.alpha[i * k + j] += wij * g_hs[de + j - 1] * (h_ij - h_sj);
            }
        }
    }

    loss
}

/// Forward + backward over a batch; gradients are means over the batch.
pub fn accumulate_batch(
    params: &ModelParams,
    samples: &[Sample],
    grads: &mut Grads,
) -> f64 {
    let scale = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    for s in samples {
        let trace = forward(params, s);
        total += backward(params, s, &trace, scale, grads);
    }
    total * scale
}
