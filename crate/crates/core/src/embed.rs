//! Word-embedding pre-training (skip-gram and CBoW with negative sampling)
//! on a message corpus, coin-symbol lookup, and cold-start diagnostics.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenizedDoc;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Tokens below this corpus count are dropped unless injected.
    pub min_count: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 32,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            seed: 0,
            min_count: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbedAlgorithm {
    SkipGram,
    Cbow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub version: u32,
    pub algorithm: EmbedAlgorithm,
    pub config: EmbedConfig,
    pub dim: usize,
    token_to_index: BTreeMap<String, usize>,
    /// Input vectors, row-major, len = vocab * dim.
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.token_to_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_to_index.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_index.contains_key(&token.to_lowercase())
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        let idx = *self.token_to_index.get(&token.to_lowercase())?;
        Some(&self.vectors[idx * self.dim..(idx + 1) * self.dim])
    }

    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.token_to_index.keys()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }

    /// Human-readable dump: one `token v1 v2 ...` line per token.
    pub fn dump_text(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (token, &idx) in &self.token_to_index {
            write!(out, "{token}")?;
            for v in &self.vectors[idx * self.dim..(idx + 1) * self.dim] {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn load_text(path: &Path, algorithm: EmbedAlgorithm) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut token_to_index = BTreeMap::new();
        let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let vec: Vec<f64> = parts.map(|p| p.parse().unwrap_or(f64::NAN)).collect();
            rows.push((token.to_string(), vec));
        }
        let dim = rows.first().map(|(_, v)| v.len()).unwrap_or(0);
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for (i, (token, vec)) in rows.into_iter().enumerate() {
            token_to_index.insert(token, i);
            vectors.extend(vec);
        }
        Ok(EmbeddingTable {
            version: 1,
            algorithm,
            config: EmbedConfig::default(),
            dim,
            token_to_index,
            vectors,
        })
    }
}

/// Returns the coin's frozen vector. Symbols are looked up lowercased, the
/// same normalization the tokenizer applies.
pub fn coin_embedding<'a>(table: &'a EmbeddingTable, symbol: &str) -> Result<&'a [f64]> {
    table
        .vector(symbol)
        .ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))
}

struct Vocab {
    token_to_index: BTreeMap<String, usize>,
    /// Raw token frequencies; kept so tests can audit the sampler.
    #[allow(dead_code)]
    counts: Vec<usize>,
    /// Cumulative unigram^0.75 distribution for negative sampling.
    neg_cdf: Vec<f64>,
}

fn build_vocab(corpus: &[TokenizedDoc], min_count: usize, inject: &[String]) -> Vocab {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        for t in &doc.tokens {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    // Injected symbols survive regardless of count.
    for s in inject {
        counts.entry(s.to_lowercase()).or_insert(0);
    }
    let inject_set: std::collections::BTreeSet<String> =
        inject.iter().map(|s| s.to_lowercase()).collect();
    let retained: BTreeMap<String, usize> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count || inject_set.contains(t))
        .collect();
    let mut token_to_index = BTreeMap::new();
    let mut count_vec = Vec::with_capacity(retained.len());
    for (i, (t, c)) in retained.into_iter().enumerate() {
        token_to_index.insert(t, i);
        count_vec.push(c);
    }
    let mut neg_cdf = Vec::with_capacity(count_vec.len());
    let mut acc = 0.0;
    for &c in &count_vec {
        // Injected zero-count tokens still get a tiny sampling mass.
        acc += (c.max(1) as f64).powf(0.75);
        neg_cdf.push(acc);
    }
    Vocab {
        token_to_index,
        counts: count_vec,
        neg_cdf,
    }
}

fn sample_negative(vocab: &Vocab, rng: &mut ChaCha8Rng) -> usize {
    let total = *vocab.neg_cdf.last().unwrap();
    let u = rng.gen_range(0.0..total);
    vocab.neg_cdf.partition_point(|&c| c <= u)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling objective for one (center, context) pair:
/// -log sigma(u_pos . v) - sum_neg log sigma(-u_neg . v).
pub fn sgns_pair_loss(v: &[f64], u_pos: &[f64], u_negs: &[&[f64]]) -> f64 {
    let mut loss = -sigmoid(dot(u_pos, v)).max(1e-12).ln();
    for u in u_negs {
        loss -= sigmoid(-dot(u, v)).max(1e-12).ln();
    }
    loss
}

/// Analytic gradients of `sgns_pair_loss` w.r.t. v, u_pos, and each u_neg.
pub fn sgns_pair_grads(
    v: &[f64],
    u_pos: &[f64],
    u_negs: &[&[f64]],
) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let d = v.len();
    let mut gv = vec![0.0; d];
    let e_pos = sigmoid(dot(u_pos, v)) - 1.0;
    let gu_pos: Vec<f64> = v.iter().map(|x| e_pos * x).collect();
    for i in 0..d {
        gv[i] += e_pos * u_pos[i];
    }
    let mut gu_negs = Vec::with_capacity(u_negs.len());
    for u in u_negs {
        let e = sigmoid(dot(u, v));
        gu_negs.push(v.iter().map(|x| e * x).collect());
        for i in 0..d {
            gv[i] += e * u[i];
        }
    }
    (gv, gu_pos, gu_negs)
}

struct Model {
    input: Vec<f64>,
    output: Vec<f64>,
    dim: usize,
}

impl Model {
    fn init(vocab_size: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let half = 0.5 / dim as f64;
        let input: Vec<f64> = (0..vocab_size * dim)
            .map(|_| rng.gen_range(-half..half))
            .collect();
        let output = vec![0.0; vocab_size * dim];
        Model { input, output, dim }
    }

    fn row<'a>(buf: &'a [f64], idx: usize, dim: usize) -> &'a [f64] {
        &buf[idx * dim..(idx + 1) * dim]
    }
}

fn finish(vocab: Vocab, model: Model, algorithm: EmbedAlgorithm, config: &EmbedConfig) -> EmbeddingTable {
    EmbeddingTable {
        version: 1,
        algorithm,
        config: config.clone(),
        dim: model.dim,
        token_to_index: vocab.token_to_index,
        vectors: model.input,
    }
}

/// Trains skip-gram with negative sampling. Deterministic given the seed;
/// single-threaded. `inject` symbols always enter the vocabulary.
pub fn train_skipgram(
    corpus: &[TokenizedDoc],
    config: &EmbedConfig,
    inject: &[String],
) -> Result<EmbeddingTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = build_vocab(corpus, config.min_count, inject);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(vocab.token_to_index.len(), config.dim, &mut rng);
    let dim = config.dim;
    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .filter_map(|t| vocab.token_to_index.get(t).copied())
                .collect()
        })
        .collect();
    for _ in 0..config.epochs {
        for doc in &docs {
            for (pos, &center) in doc.iter().enumerate() {
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(doc.len());
                for ctx_pos in lo..hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = doc[ctx_pos];
                    sgns_step(
                        &mut model,
                        center,
                        context,
                        &vocab,
                        config,
                        &mut rng,
                        dim,
                    );
                }
            }
        }
    }
    Ok(finish(vocab, model, EmbedAlgorithm::SkipGram, config))
}

fn sgns_step(
    model: &mut Model,
    center: usize,
    context: usize,
    vocab: &Vocab,
    config: &EmbedConfig,
    rng: &mut ChaCha8Rng,
    dim: usize,
) {
    let mut gv = vec![0.0; dim];
    {
        let v = Model::row(&model.input, center, dim);
        let u = Model::row(&model.output, context, dim);
        let e = sigmoid(dot(u, v)) - 1.0;
        for i in 0..dim {
            gv[i] += e * u[i];
        }
        let grad_u: Vec<f64> = v.iter().map(|x| e * x).collect();
        let out = &mut model.output[context * dim..(context + 1) * dim];
        for i in 0..dim {
            out[i] -= config.lr * grad_u[i];
        }
    }
    for _ in 0..config.negatives {
        let neg = sample_negative(vocab, rng);
        if neg == context {
            continue;
        }
        let v = Model::row(&model.input, center, dim);
        let u = Model::row(&model.output, neg, dim);
        let e = sigmoid(dot(u, v));
        for i in 0..dim {
            gv[i] += e * u[i];
        }
        let grad_u: Vec<f64> = v.iter().map(|x| e * x).collect();
        let out = &mut model.output[neg * dim..(neg + 1) * dim];
        for i in 0..dim {
            out[i] -= config.lr * grad_u[i];
        }
    }
    let vrow = &mut model.input[center * dim..(center + 1) * dim];
    for i in 0..dim {
        vrow[i] -= config.lr * gv[i];
    }
}

/// Trains CBoW with negative sampling: the averaged context window predicts
/// the center token.
pub fn train_cbow(
    corpus: &[TokenizedDoc],
    config: &EmbedConfig,
    inject: &[String],
) -> Result<EmbeddingTable> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = build_vocab(corpus, config.min_count, inject);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(vocab.token_to_index.len(), config.dim, &mut rng);
    let dim = config.dim;
    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .filter_map(|t| vocab.token_to_index.get(t).copied())
                .collect()
        })
        .collect();
    for _ in 0..config.epochs {
        for doc in &docs {
            for (pos, &center) in doc.iter().enumerate() {
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(doc.len());
                let context: Vec<usize> = (lo..hi).filter(|&p| p != pos).map(|p| doc[p]).collect();
                if context.is_empty() {
                    continue;
                }
                // v_bar = mean of context input vectors.
                let mut v_bar = vec![0.0; dim];
                for &c in &context {
                    let row = Model::row(&model.input, c, dim);
                    for i in 0..dim {
                        v_bar[i] += row[i];
                    }
                }
                let scale = 1.0 / context.len() as f64;
                for x in &mut v_bar {
                    *x *= scale;
                }
                let mut g_vbar = vec![0.0; dim];
                {
                    let u = Model::row(&model.output, center, dim);
                    let e = sigmoid(dot(u, &v_bar)) - 1.0;
                    for i in 0..dim {
                        g_vbar[i] += e * u[i];
                    }
                    let grad_u: Vec<f64> = v_bar.iter().map(|x| e * x).collect();
                    let out = &mut model.output[center * dim..(center + 1) * dim];
                    for i in 0..dim {
                        out[i] -= config.lr * grad_u[i];
                    }
                }
                for _ in 0..config.negatives {
                    let neg = sample_negative(&vocab, &mut rng);
                    if neg == center {
                        continue;
                    }
                    let u = Model::row(&model.output, neg, dim);
                    let e = sigmoid(dot(u, &v_bar));
                    for i in 0..dim {
                        g_vbar[i] += e * u[i];
                    }
                    let grad_u: Vec<f64> = v_bar.iter().map(|x| e * x).collect();
                    let out = &mut model.output[neg * dim..(neg + 1) * dim];
                    for i in 0..dim {
                        out[i] -= config.lr * grad_u[i];
                    }
                }
                // Context gradient splits the v_bar gradient evenly.
                for &c in &context {
                    let row = &mut model.input[c * dim..(c + 1) * dim];
                    for i in 0..dim {
                        row[i] -= config.lr * scale * g_vbar[i];
                    }
                }
            }
        }
    }
    Ok(finish(vocab, model, EmbedAlgorithm::Cbow, config))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Histogram summary of per-row l1 norms for one diagnostic group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupNormStats {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    /// 0th..10th decile (min..max), empty when the group is empty.
    pub deciles: Vec<f64>,
}

/// Per-group l1-norm statistics over embedding rows; the cold-start
/// signature shows untrained rows frozen at their initialization norm.
pub fn l1_norm_report(groups: &[(String, Vec<Vec<f64>>)]) -> Vec<GroupNormStats> {
    groups
        .iter()
        .map(|(name, rows)| {
            let mut norms: Vec<f64> = rows
                .iter()
                .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
                .collect();
            norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if norms.is_empty() {
                return GroupNormStats {
                    group: name.clone(),
                    count: 0,
                    mean: 0.0,
                    std: 0.0,
                    deciles: vec![],
                };
            }
            let n = norms.len() as f64;
            let mean = norms.iter().sum::<f64>() / n;
            let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let deciles = (0..=10)
                .map(|d| {
                    let idx = ((d as f64 / 10.0) * (norms.len() - 1) as f64).round() as usize;
                    norms[idx]
                })
                .collect();
            GroupNormStats {
                group: name.clone(),
                count: norms.len(),
                mean,
                std: var.sqrt(),
                deciles,
            }
        })
        .collect()
}

/// Expected l1 norm of a d-dim row initialized uniform(-half, half) per
/// component: d * half / 2.
pub fn expected_l1_uniform(dim: usize, half: f64) -> f64 {
    dim as f64 * half / 2.0
}

/// Expected l1 norm of a d-dim row initialized N(0, sigma^2) per component:
/// d * sigma * sqrt(2/pi).
pub fn expected_l1_normal(dim: usize, sigma: f64) -> f64 {
    dim as f64 * sigma * (2.0 / std::f64::consts::PI).sqrt()
}

/// Cosine-similarity distributions under the three pair-selection
/// strategies: same-channel history, all pumped coins, all coins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityStudy {
    pub same_channel: Vec<f64>,
    pub pumped: Vec<f64>,
    pub all_coins: Vec<f64>,
    pub mean_same_channel: f64,
    pub mean_pumped: f64,
    pub mean_all: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Samples up to `max_pairs` coin pairs per strategy and reports cosine
/// similarity distributions and their means.
pub fn semantic_similarity_study(
    table: &EmbeddingTable,
    channel_histories: &[Vec<String>],
    pumped_coins: &[String],
    all_coins: &[String],
    max_pairs: usize,
    seed: u64,
) -> SimilarityStudy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut same_channel = Vec::new();
    for history in channel_histories {
        let present: Vec<&String> = history.iter().filter(|c| table.contains(c)).collect();
        for i in 0..present.len() {
            for j in i + 1..present.len() {
                if same_channel.len() >= max_pairs {
                    break;
                }
                same_channel.push(cosine(
                    table.vector(present[i]).unwrap(),
                    table.vector(present[j]).unwrap(),
                ));
            }
        }
    }
    let sample_pairs = |pool: &[String], rng: &mut ChaCha8Rng| -> Vec<f64> {
        let present: Vec<&String> = pool.iter().filter(|c| table.contains(c)).collect();
        let mut sims = Vec::new();
        if present.len() < 2 {
            return sims;
        }
        for _ in 0..max_pairs {
            let i = rng.gen_range(0..present.len());
            let mut j = rng.gen_range(0..present.len());
            while j == i {
                j = rng.gen_range(0..present.len());
            }
            sims.push(cosine(
                table.vector(present[i]).unwrap(),
                table.vector(present[j]).unwrap(),
            ));
        }
        sims
    };
    let pumped = sample_pairs(pumped_coins, &mut rng);
    let all = sample_pairs(all_coins, &mut rng);
    SimilarityStudy {
        mean_same_channel: mean(&same_channel),
        mean_pumped: mean(&pumped),
        mean_all: mean(&all),
        same_channel,
        pumped,
        all_coins: all,
    }
}
