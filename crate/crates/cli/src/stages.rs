//! One function per subcommand. Every stage reads only paths derived from
//! the config (or explicit flags), writes only into the output directory,
//! and is deterministic for a fixed seed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use pumpwatch::corpus::{
    fit_vocabulary, read_messages_jsonl, tfidf_transform, tokenize, Lexicon, TfidfVocabulary,
};
use pumpwatch::detector::{
    load_model, predict_proba, save_model, train_logreg, LabeledDoc,
};
use pumpwatch::embed::{train_skipgram, EmbeddingTable};
use pumpwatch::error::{Error, Result};
use pumpwatch::eval::{
    auc, hit_ratio, ranked_lists, render_table, write_results_csv, CellResult, HR_CUTOFFS,
};
use pumpwatch::events::{read_merged_jsonl, write_events_jsonl, write_merged_jsonl, EventLexicons};
use pumpwatch::features::{
    normalize, read_samples_jsonl, temporal_split, write_samples_jsonl, ExclusionList, IdMaps,
    NormStats, SampleBuilder, CHANNEL_NUMERIC_FIELDS,
};
use pumpwatch::market::{CandleStore, CoinStatsStore, ListingTable};
use pumpwatch::pipeline::events_from_messages;
use pumpwatch::snn::{
    export_attention_heatmap, predict as model_predict, train as model_train, EmbeddingMode,
    ModelParams,
};
use pumpwatch::synth::generate_world;
use serde::{Deserialize, Serialize};

use crate::config::{require, PipelineConfig};

/// Per-run metadata produced by `featurize` and consumed by `train`.
#[derive(Serialize, Deserialize)]
struct SplitMeta {
    ids: IdMaps,
    norm: Option<NormStats>,
    t1: i64,
    t2: i64,
    target_numeric_len: usize,
}

fn out_dir(cfg: &PipelineConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(&cfg.out_dir)
}

fn load_lexicons(data: &Path) -> Result<(Lexicon, EventLexicons)> {
    let keywords = Lexicon::load(&require(&data.join("keywords.txt"))?)?;
    let lex = EventLexicons {
        exchanges: Lexicon::load(&require(&data.join("exchanges.txt"))?)?,
        pairing_coins: Lexicon::load(&require(&data.join("pairing_coins.txt"))?)?,
        listed_coins: Lexicon::load(&require(&data.join("listed_coins.txt"))?)?,
    };
    Ok((keywords, lex))
}

pub fn synth(cfg: &PipelineConfig) -> Result<()> {
    let world = generate_world(&cfg.synth)?;
    std::fs::create_dir_all(&cfg.data_dir)?;
    world.write_to_dir(&cfg.data_dir)?;
    println!(
        "wrote world seed={} ({} messages, {} planted events) to {}",
        cfg.synth.seed,
        world.messages.len(),
        world.planted.len(),
        cfg.data_dir.display()
    );
    Ok(())
}

/// Reads `labels.csv` (message_id,label) next to the message stream.
fn read_labels(path: &Path) -> Result<BTreeMap<u64, u8>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let (id, label) = line.split_once(',').ok_or(Error::MalformedRow {
            line: i + 1,
            reason: "expected message_id,label".into(),
        })?;
        let id: u64 = id.parse().map_err(|_| Error::MalformedRow {
            line: i + 1,
            reason: "bad message_id".into(),
        })?;
        let label: u8 = label.trim().parse().map_err(|_| Error::MalformedRow {
            line: i + 1,
            reason: "bad label".into(),
        })?;
        labels.insert(id, label);
    }
    Ok(labels)
}

pub fn detect_train(cfg: &PipelineConfig) -> Result<()> {
    let msgs = read_messages_jsonl(&require(&cfg.data_dir.join("messages.jsonl"))?)?;
    let labels = read_labels(&require(&cfg.data_dir.join("labels.csv"))?)?;
    let labeled: Vec<(&str, u8)> = msgs
        .iter()
        .filter_map(|m| labels.get(&m.message_id).map(|&l| (m.text.as_str(), l)))
        .collect();
    let docs: Vec<_> = labeled.iter().map(|(t, _)| tokenize(t)).collect();
    let vocab = fit_vocabulary(&docs, cfg.min_df)?;
    let data: Vec<LabeledDoc> = docs
        .iter()
        .zip(&labeled)
        .map(|(d, (_, l))| LabeledDoc {
            vector: tfidf_transform(d, &vocab),
            label: *l,
        })
        .collect();
    let model = train_logreg(&data, vocab.len(), &cfg.detector, vocab.content_hash())?;
    let out = out_dir(cfg)?;
    save_model(&model, &out.join("detector.json"))?;
    serde_json::to_writer(
        std::io::BufWriter::new(std::fs::File::create(out.join("vocab.json"))?),
        &vocab,
    )?;
    println!(
        "trained detector on {} docs, vocab {} terms, final loss {:.6}",
        data.len(),
        vocab.len(),
        model.trace.last().map(|t| t.1).unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn detect_score(cfg: &PipelineConfig, model_path: Option<&Path>) -> Result<()> {
    let out = out_dir(cfg)?;
    let model_path = model_path.unwrap_or(&out.join("detector.json")).to_path_buf();
    let model = load_model(&require(&model_path)?)?;
    let vocab: TfidfVocabulary = serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(require(&out.join("vocab.json"))?)?,
    ))?;
    if vocab.content_hash() != model.vocab_hash {
        return Err(Error::ConfigError(
            "vocabulary hash does not match the model's".into(),
        ));
    }
    let msgs = read_messages_jsonl(&require(&cfg.data_dir.join("messages.jsonl"))?)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("scores.csv"))?);
    writeln!(w, "message_id,score,flag")?;
    for m in &msgs {
        let v = tfidf_transform(&tokenize(&m.text), &vocab);
        let p = predict_proba(&model, &v);
        writeln!(w, "{},{},{}", m.message_id, p, u8::from(p >= 0.5))?;
    }
    println!("scored {} messages", msgs.len());
    Ok(())
}

pub fn sessionize(cfg: &PipelineConfig) -> Result<()> {
    let msgs = read_messages_jsonl(&require(&cfg.data_dir.join("messages.jsonl"))?)?;
    let sessions = pumpwatch::events::sessionize(&msgs);
    let out = out_dir(cfg)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("sessions.jsonl"))?);
    for s in &sessions {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    println!("{} sessions", sessions.len());
    Ok(())
}

pub fn extract_events(cfg: &PipelineConfig) -> Result<()> {
    let msgs = read_messages_jsonl(&require(&cfg.data_dir.join("messages.jsonl"))?)?;
    let (keywords, lex) = load_lexicons(&cfg.data_dir)?;
    let (events, merged, review) = events_from_messages(&msgs, &keywords, &lex);
    let out = out_dir(cfg)?;
    write_events_jsonl(&out.join("events.jsonl"), &events)?;
    write_merged_jsonl(&out.join("merged.jsonl"), &merged)?;
    // Ambiguous sessions go to a review file instead of the event stream.
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("review.jsonl"))?);
    for s in &review {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    println!(
        "{} events, {} merged, {} sessions for review",
        events.len(),
        merged.len(),
        review.len()
    );
    Ok(())
}

pub fn featurize(cfg: &PipelineConfig) -> Result<()> {
    let out = out_dir(cfg)?;
    let merged = read_merged_jsonl(&require(&out.join("merged.jsonl"))?)?;
    let mut candles = CandleStore::new();
    candles.load_dir(&require(&cfg.data_dir.join("candles"))?)?;
    let stats = CoinStatsStore::load(&require(&cfg.data_dir.join("coin_stats.csv"))?)?;
    let listings = ListingTable::load(&require(&cfg.data_dir.join("listings.csv"))?)?;
    let coins_text = std::fs::read_to_string(require(&cfg.data_dir.join("listed_coins.txt"))?)?;
    let split_meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(require(
        &cfg.data_dir.join("split.json"),
    )?)?)?;
    let (t1, t2) = (
        split_meta["t1"].as_i64().ok_or(Error::ConfigError("split.json missing t1".into()))?,
        split_meta["t2"].as_i64().ok_or(Error::ConfigError("split.json missing t2".into()))?,
    );
    let ids = IdMaps::build(
        coins_text.lines().filter(|l| !l.is_empty()),
        merged.iter().flat_map(|e| e.channels.iter().map(|c| c.as_str())),
    );
    let builder = SampleBuilder {
        candles: &candles,
        stats: &stats,
        listings: &listings,
        ids: &ids,
        exclusions: &ExclusionList::default(),
        max_seq_len: cfg.max_seq_len,
    };
    let samples = builder.build_all(&merged)?;
    let split = normalize(temporal_split(samples, t1, t2)?)?;
    write_samples_jsonl(&out.join("train.jsonl"), &split.train)?;
    write_samples_jsonl(&out.join("validation.jsonl"), &split.validation)?;
    write_samples_jsonl(&out.join("test.jsonl"), &split.test)?;
    let meta = SplitMeta {
        ids,
        norm: split.norm.clone(),
        t1,
        t2,
        target_numeric_len: split
            .train
            .first()
            .map(|s| s.target_numeric.len())
            .unwrap_or(0),
    };
    serde_json::to_writer(
        std::io::BufWriter::new(std::fs::File::create(out.join("meta.json"))?),
        &meta,
    )?;
    println!(
        "samples: train {} validation {} test {}",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(())
}

pub fn embed_train(cfg: &PipelineConfig) -> Result<()> {
    let msgs = read_messages_jsonl(&require(&cfg.data_dir.join("messages.jsonl"))?)?;
    let coins_text = std::fs::read_to_string(require(&cfg.data_dir.join("listed_coins.txt"))?)?;
    let inject: Vec<String> = coins_text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.to_lowercase())
        .collect();
    let docs: Vec<_> = msgs.iter().map(|m| tokenize(&m.text)).collect();
    let table = train_skipgram(&docs, &cfg.embed, &inject)?;
    let out = out_dir(cfg)?;
    table.save(&out.join("embeddings.json"))?;
    table.dump_text(&out.join("embeddings.txt"))?;
    println!("{} vectors of dim {}", table.len(), cfg.embed.dim);
    Ok(())
}

fn load_meta(out: &Path) -> Result<SplitMeta> {
    Ok(serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(require(&out.join("meta.json"))?)?,
    ))?)
}

pub fn train(cfg: &PipelineConfig, pretrained: Option<&Path>) -> Result<()> {
    let out = out_dir(cfg)?;
    let meta = load_meta(out)?;
    let train_set = read_samples_jsonl(&require(&out.join("train.jsonl"))?)?;
    let val_set = read_samples_jsonl(&require(&out.join("validation.jsonl"))?)?;
    let mut model_cfg = cfg.model.clone();
    if pretrained.is_some() {
        model_cfg.embedding_mode = EmbeddingMode::Pretrained;
    }
    let mut params = ModelParams::init(
        model_cfg,
        meta.ids.channel_table_size(),
        meta.ids.coin_table_size(),
        CHANNEL_NUMERIC_FIELDS,
        meta.target_numeric_len,
    )?;
    if let Some(path) = pretrained {
        let table = EmbeddingTable::load(&require(path)?)?;
        let loaded = params.load_pretrained(&table, &meta.ids)?;
        println!("loaded {loaded} pretrained coin vectors");
    }
    params.norm = meta.norm.clone();
    let outcome = model_train(params, &train_set, &val_set)?;
    outcome.params.save(&out.join("checkpoint.json"))?;
    outcome.write_log(&out.join("train_log.jsonl"))?;
    println!(
        "best epoch {} (validation AUC {:.4})",
        outcome.best_epoch, outcome.best_val_auc
    );
    Ok(())
}

pub fn evaluate(cfg: &PipelineConfig, checkpoint: Option<&Path>) -> Result<()> {
    let out = out_dir(cfg)?;
    let ckpt = checkpoint.unwrap_or(&out.join("checkpoint.json")).to_path_buf();
    let params = ModelParams::load(&require(&ckpt)?)?;
    let test = read_samples_jsonl(&require(&out.join("test.jsonl"))?)?;
    let (scores, unknown) = model_predict(&params, &test);
    let labels: Vec<u8> = test.iter().map(|s| s.label).collect();
    let test_auc = auc(&scores, &labels)?;
    let lists = ranked_lists(&test, &scores);
    let result = CellResult {
        name: format!("{:?}", params.config.mode),
        seed: params.config.seed,
        auc: test_auc,
        hr: HR_CUTOFFS.iter().map(|&k| hit_ratio(&lists, k)).collect(),
        best_epoch: 0,
        val_auc: f64::NAN,
    };
    write_results_csv(&out.join("metrics.csv"), std::slice::from_ref(&result))?;
    print!("{}", render_table(std::slice::from_ref(&result)));
    if unknown > 0 {
        println!("({unknown} samples hit the unknown-id fallback)");
    }
    Ok(())
}

pub fn predict(
    cfg: &PipelineConfig,
    checkpoint: Option<&Path>,
    samples: Option<&Path>,
) -> Result<()> {
    let out = out_dir(cfg)?;
    let ckpt = checkpoint.unwrap_or(&out.join("checkpoint.json")).to_path_buf();
    let params = ModelParams::load(&require(&ckpt)?)?;
    let sample_path = samples.unwrap_or(&out.join("test.jsonl")).to_path_buf();
    let set = read_samples_jsonl(&require(&sample_path)?)?;
    let (scores, _) = model_predict(&params, &set);
    let lists = ranked_lists(&set, &scores);
    let mut w = std::io::BufWriter::new(std::fs::File::create(out.join("ranked.csv"))?);
    writeln!(w, "event_ref,rank,coin,probability")?;
    for list in &lists {
        for (rank, (coin, score)) in list.entries.iter().enumerate() {
            writeln!(w, "{},{},{},{}", list.event_ref, rank + 1, coin, score)?;
        }
    }
    println!("ranked {} events over {} samples", lists.len(), set.len());
    Ok(())
}

pub fn report(
    cfg: &PipelineConfig,
    checkpoint: Option<&Path>,
    results: Option<&Path>,
) -> Result<()> {
    let out = out_dir(cfg)?;
    let results_path = results.unwrap_or(&out.join("metrics.csv")).to_path_buf();
    let rows = read_results_csv(&require(&results_path)?)?;
    let table = render_table(&rows);
    std::fs::write(out.join("report.txt"), &table)?;
    print!("{table}");
    let ckpt = checkpoint.unwrap_or(&out.join("checkpoint.json")).to_path_buf();
    if ckpt.exists() {
        let params = ModelParams::load(&ckpt)?;
        export_attention_heatmap(&params, &out.join("attention.csv"))?;
        println!("attention heat-map written to {}", out.join("attention.csv").display());
    }
    Ok(())
}

/// Reads back the CSV produced by `write_results_csv`.
fn read_results_csv(path: &Path) -> Result<Vec<CellResult>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + HR_CUTOFFS.len() + 2 {
            return Err(Error::MalformedRow {
                line: i + 1,
                reason: format!("expected {} fields", 3 + HR_CUTOFFS.len() + 2),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::MalformedRow {
                line: i + 1,
                reason: format!("bad float {s}"),
            })
        };
        rows.push(CellResult {
            name: fields[0].to_string(),
            seed: fields[1].parse().unwrap_or(0),
            auc: parse(fields[2])?,
            hr: fields[3..3 + HR_CUTOFFS.len()]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_>>()?,
            best_epoch: fields[3 + HR_CUTOFFS.len()].parse().unwrap_or(0),
            val_auc: parse(fields[4 + HR_CUTOFFS.len()]).unwrap_or(f64::NAN),
        });
    }
    Ok(rows)
}
