//! Python bindings for the pump target prediction pipeline. The module is
//! a thin deterministic wrapper: every operation delegates to the Rust
//! core, and seeds behave exactly as they do from the CLI.

use std::path::PathBuf;

use pumpwatch::corpus::{fit_vocabulary, tfidf_transform, tokenize, Lexicon};
use pumpwatch::detector::{self, LabeledDoc, LogRegConfig};
use pumpwatch::embed::{train_skipgram, EmbedConfig, EmbeddingTable};
use pumpwatch::error::Error;
use pumpwatch::eval;
use pumpwatch::features::{DatasetSplit, IdMaps, Sample, CHANNEL_NUMERIC_FIELDS};
use pumpwatch::pipeline::{events_from_messages, split_from_world};
use pumpwatch::snn::{
    self, EmbeddingMode, ModelConfig, ModelMode, ModelParams,
};
use pumpwatch::synth::{generate_world, WorldConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::MissingInput(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Synthetic world generator configuration.
#[pyclass(name = "WorldConfig")]
#[derive(Clone)]
struct PyWorldConfig {
    inner: WorldConfig,
}

#[pymethods]
impl PyWorldConfig {
    #[new]
    #[pyo3(signature = (seed = 0, n_channels = None, n_coins = None, events_per_channel = None,
                        message_noise = None, ambiguous_rate = None, history_noise = None,
                        federation_rate = None, cold_start_fraction = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        seed: u64,
        n_channels: Option<usize>,
        n_coins: Option<usize>,
        events_per_channel: Option<usize>,
        message_noise: Option<f64>,
        ambiguous_rate: Option<f64>,
        history_noise: Option<f64>,
        federation_rate: Option<f64>,
        cold_start_fraction: Option<f64>,
    ) -> Self {
        let mut c = WorldConfig {
            seed,
            ..WorldConfig::default()
        };
        if let Some(v) = n_channels {
            c.n_channels = v;
        }
        if let Some(v) = n_coins {
            c.n_coins = v;
        }
        if let Some(v) = events_per_channel {
            c.events_per_channel = v;
        }
        if let Some(v) = message_noise {
            c.message_noise = v;
        }
        if let Some(v) = ambiguous_rate {
            c.ambiguous_rate = v;
        }
        if let Some(v) = history_noise {
            c.history_noise = v;
        }
        if let Some(v) = federation_rate {
            c.federation_rate = v;
        }
        if let Some(v) = cold_start_fraction {
            c.cold_start_fraction = v;
        }
        PyWorldConfig { inner: c }
    }

    fn __repr__(&self) -> String {
        format!(
            "WorldConfig(seed={}, n_channels={}, n_coins={}, events_per_channel={})",
            self.inner.seed,
            self.inner.n_channels,
            self.inner.n_coins,
            self.inner.events_per_channel
        )
    }
}

/// A generated synthetic world with its planted ground truth.
#[pyclass(name = "World")]
struct PyWorld {
    inner: pumpwatch::synth::World,
}

#[pymethods]
impl PyWorld {
    #[getter]
    fn n_messages(&self) -> usize {
        self.inner.messages.len()
    }

    #[getter]
    fn n_planted(&self) -> usize {
        self.inner.planted.len()
    }

    #[getter]
    fn coins(&self) -> Vec<String> {
        self.inner.coins.clone()
    }

    #[getter]
    fn t1(&self) -> i64 {
        self.inner.t1
    }

    #[getter]
    fn t2(&self) -> i64 {
        self.inner.t2
    }

    /// (text, label) pairs for the detector: lifecycle vs chatter.
    fn labeled_docs(&self) -> Vec<(String, u8)> {
        self.inner.labeled_docs()
    }

    /// Extracted merged events as (pump_time, channels, exchange,
    /// pairing_coin, target_coin) tuples.
    fn merged_events(&self) -> Vec<(i64, Vec<String>, String, String, String)> {
        let (_, merged, _) = events_from_messages(
            &self.inner.messages,
            &self.inner.keywords,
            &self.inner.lexicons,
        );
        merged
            .into_iter()
            .map(|e| (e.pump_time, e.channels, e.exchange, e.pairing_coin, e.target_coin))
            .collect()
    }

    fn write_to_dir(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_to_dir(&path).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "World(seed={}, messages={}, planted={})",
            self.inner.config.seed,
            self.inner.messages.len(),
            self.inner.planted.len()
        )
    }
}

/// Normalized train/validation/test samples plus the id maps.
#[pyclass(name = "Dataset")]
struct PyDataset {
    split: DatasetSplit,
    ids: IdMaps,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn sizes(&self) -> (usize, usize, usize) {
        (
            self.split.train.len(),
            self.split.validation.len(),
            self.split.test.len(),
        )
    }

    fn test_labels(&self) -> Vec<u8> {
        self.split.test.iter().map(|s| s.label).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(train={}, validation={}, test={})",
            self.split.train.len(),
            self.split.validation.len(),
            self.split.test.len()
        )
    }
}

/// Model hyper-parameters. `mode` is one of "dnn", "snn_v", "snn";
/// `embedding` is "e2e" or "pretrained".
#[pyclass(name = "ModelConfig")]
#[derive(Clone)]
struct PyModelConfig {
    inner: ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (mode = "snn", seed = 0, embedding = "e2e", seq_len = 10, epochs = 30,
                        patience = 10, lr = 3e-3, batch_size = 256, downsample_negatives = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        mode: &str,
        seed: u64,
        embedding: &str,
        seq_len: usize,
        epochs: usize,
        patience: usize,
        lr: f64,
        batch_size: usize,
        downsample_negatives: Option<f64>,
    ) -> PyResult<Self> {
        let mode = match mode {
            "dnn" => ModelMode::Dnn,
            "snn_v" => ModelMode::SnnV,
            "snn" => ModelMode::Snn,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown mode {other:?} (expected dnn, snn_v, or snn)"
                )))
            }
        };
        let embedding_mode = match embedding {
            "e2e" => EmbeddingMode::E2E,
            "pretrained" => EmbeddingMode::Pretrained,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown embedding {other:?} (expected e2e or pretrained)"
                )))
            }
        };
        Ok(PyModelConfig {
            inner: ModelConfig {
                mode,
                embedding_mode,
                seq_len,
                epochs,
                patience,
                lr,
                batch_size,
                downsample_negatives,
                seed,
                ..ModelConfig::default()
            },
        })
    }
}

/// A trained target coin prediction model.
#[pyclass(name = "Model")]
struct PyModel {
    params: ModelParams,
    best_epoch: usize,
    best_val_auc: f64,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    #[getter]
    fn best_val_auc(&self) -> f64 {
        self.best_val_auc
    }

    /// Raw attention matrix, rows = history positions, cols = fields.
    fn attention(&self) -> Vec<Vec<f64>> {
        let n = self.params.config.effective_seq_len();
        let k = self.params.config.seq_fields();
        (0..n)
            .map(|i| self.params.alpha[i * k..(i + 1) * k].to_vec())
            .collect()
    }

    /// Scores the dataset's test split; returns per-sample probabilities.
    fn predict_test(&self, dataset: &PyDataset) -> Vec<f64> {
        snn::predict(&self.params, &dataset.split.test).0
    }

    /// Test AUC and HR@k for the given cutoffs.
    #[pyo3(signature = (dataset, cutoffs = vec![1, 3, 5, 10, 20, 30]))]
    fn evaluate(&self, dataset: &PyDataset, cutoffs: Vec<usize>) -> PyResult<(f64, Vec<f64>)> {
        let (scores, _) = snn::predict(&self.params, &dataset.split.test);
        let labels: Vec<u8> = dataset.split.test.iter().map(|s| s.label).collect();
        let auc = eval::auc(&scores, &labels).map_err(to_py_err)?;
        let lists = eval::ranked_lists(&dataset.split.test, &scores);
        let hr = cutoffs.iter().map(|&k| eval::hit_ratio(&lists, k)).collect();
        Ok((auc, hr))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.params.save(&path).map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            params: ModelParams::load(&path).map_err(to_py_err)?,
            best_epoch: 0,
            best_val_auc: f64::NAN,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(mode={:?}, best_epoch={}, best_val_auc={:.4})",
            self.params.config.mode, self.best_epoch, self.best_val_auc
        )
    }
}

/// Pre-trained coin embedding table.
#[pyclass(name = "Embeddings")]
struct PyEmbeddings {
    table: EmbeddingTable,
}

#[pymethods]
impl PyEmbeddings {
    fn __len__(&self) -> usize {
        self.table.len()
    }

    fn vector(&self, token: &str) -> Option<Vec<f64>> {
        self.table.vector(&token.to_lowercase()).map(|v| v.to_vec())
    }

    fn cosine(&self, a: &str, b: &str) -> PyResult<f64> {
        let va = self
            .vector(a)
            .ok_or_else(|| PyValueError::new_err(format!("unknown token {a:?}")))?;
        let vb = self
            .vector(b)
            .ok_or_else(|| PyValueError::new_err(format!("unknown token {b:?}")))?;
        Ok(pumpwatch::embed::cosine(&va, &vb))
    }
}

/// TF-IDF + logistic regression pump-message detector.
#[pyclass(name = "Detector")]
struct PyDetector {
    vocab: pumpwatch::corpus::TfidfVocabulary,
    model: detector::LogRegModel,
}

#[pymethods]
impl PyDetector {
    fn score(&self, text: &str) -> f64 {
        let v = tfidf_transform(&tokenize(text), &self.vocab);
        detector::predict_proba(&self.model, &v)
    }

    fn score_many(&self, texts: Vec<String>) -> Vec<f64> {
        texts.iter().map(|t| self.score(t)).collect()
    }
}

#[pyfunction]
fn generate(config: &PyWorldConfig) -> PyResult<PyWorld> {
    Ok(PyWorld {
        inner: generate_world(&config.inner).map_err(to_py_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (world, max_seq_len = 10))]
fn build_dataset(world: &PyWorld, max_seq_len: usize) -> PyResult<PyDataset> {
    let (split, ids) = split_from_world(&world.inner, max_seq_len).map_err(to_py_err)?;
    Ok(PyDataset { split, ids })
}

#[pyfunction]
#[pyo3(signature = (config, dataset, embeddings = None, val_negative_keep = None))]
fn train_model(
    config: &PyModelConfig,
    dataset: &PyDataset,
    embeddings: Option<&PyEmbeddings>,
    val_negative_keep: Option<f64>,
) -> PyResult<PyModel> {
    let first = dataset
        .split
        .train
        .first()
        .ok_or_else(|| PyValueError::new_err("empty train split"))?;
    let mut params = ModelParams::init(
        config.inner.clone(),
        dataset.ids.channel_table_size(),
        dataset.ids.coin_table_size(),
        CHANNEL_NUMERIC_FIELDS,
        first.target_numeric.len(),
    )
    .map_err(to_py_err)?;
    if config.inner.embedding_mode == EmbeddingMode::Pretrained {
        let table = embeddings
            .ok_or_else(|| PyValueError::new_err("pretrained mode needs an embeddings table"))?;
        params
            .load_pretrained(&table.table, &dataset.ids)
            .map_err(to_py_err)?;
    }
    params.norm = dataset.split.norm.clone();
    let val: Vec<Sample> = match val_negative_keep {
        Some(keep) if keep < 1.0 => {
            eval::thin_negatives(&dataset.split.validation, keep, config.inner.seed)
        }
        _ => dataset.split.validation.clone(),
    };
    let outcome = snn::train(params, &dataset.split.train, &val).map_err(to_py_err)?;
    Ok(PyModel {
        params: outcome.params,
        best_epoch: outcome.best_epoch,
        best_val_auc: outcome.best_val_auc,
    })
}

#[pyfunction]
#[pyo3(signature = (docs, min_df = 2, epochs = 500, lr = 0.5, l2 = 1e-4, seed = 0))]
fn train_detector(
    docs: Vec<(String, u8)>,
    min_df: u32,
    epochs: usize,
    lr: f64,
    l2: f64,
    seed: u64,
) -> PyResult<PyDetector> {
    let tokenized: Vec<_> = docs.iter().map(|(t, _)| tokenize(t)).collect();
    let vocab = fit_vocabulary(&tokenized, min_df).map_err(to_py_err)?;
    let data: Vec<LabeledDoc> = tokenized
        .iter()
        .zip(&docs)
        .map(|(d, (_, l))| LabeledDoc {
            vector: tfidf_transform(d, &vocab),
            label: *l,
        })
        .collect();
    let config = LogRegConfig { lr, epochs, l2, seed };
    let model = detector::train_logreg(&data, vocab.len(), &config, vocab.content_hash())
        .map_err(to_py_err)?;
    Ok(PyDetector { vocab, model })
}

#[pyfunction]
#[pyo3(signature = (texts, inject = vec![], dim = 32, epochs = 5, seed = 0))]
fn train_embeddings(
    texts: Vec<String>,
    inject: Vec<String>,
    dim: usize,
    epochs: usize,
    seed: u64,
) -> PyResult<PyEmbeddings> {
    let docs: Vec<_> = texts.iter().map(|t| tokenize(t)).collect();
    let inject: Vec<String> = inject.iter().map(|s| s.to_lowercase()).collect();
    let config = EmbedConfig {
        dim,
        epochs,
        seed,
        ..EmbedConfig::default()
    };
    Ok(PyEmbeddings {
        table: train_skipgram(&docs, &config, &inject).map_err(to_py_err)?,
    })
}

#[pyfunction(name = "tokenize")]
fn py_tokenize(text: &str) -> Vec<String> {
    tokenize(text).tokens
}

#[pyfunction(name = "auc")]
fn py_auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    eval::auc(&scores, &labels).map_err(to_py_err)
}

#[pyfunction]
fn keyword_filter(text: &str, keywords: Vec<String>) -> bool {
    let msg = pumpwatch::corpus::Message {
        channel_id: String::new(),
        message_id: 0,
        timestamp: 0,
        text: text.to_string(),
    };
    pumpwatch::corpus::keyword_filter(&msg, &Lexicon::new(keywords))
}

#[pymodule]
fn _pumpwatch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWorldConfig>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyEmbeddings>()?;
    m.add_class::<PyDetector>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(build_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(train_detector, m)?)?;
    m.add_function(wrap_pyfunction!(train_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(py_tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(py_auc, m)?)?;
    m.add_function(wrap_pyfunction!(keyword_filter, m)?)?;
    Ok(())
}
