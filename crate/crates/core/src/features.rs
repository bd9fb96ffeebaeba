//! Labeled training-sample assembly: candidate labeling per event, channel
//! features, target-coin features, pump-history sequences, temporal splits,
//! and train-only normalization.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::MergedEvent;
use crate::market::{compute_window_features, CandleStore, CoinStatsStore, ListingTable};

/// Reserved row 0 of the coin embedding table: sequence padding.
pub const PAD_COIN_ID: usize = 0;
/// Reserved row 1 of the coin embedding table: unseen coin at predict time.
pub const UNKNOWN_COIN_ID: usize = 1;
/// Reserved row 0 of the channel embedding table.
pub const UNKNOWN_CHANNEL_ID: usize = 0;

/// Numeric fields attached to each sequence item (stable stats of the
/// pumped coin at its pump time).
pub const SEQ_NUMERIC_FIELDS: usize = 4;
/// Numeric channel-history fields: prior pump count, mean prior market cap
/// (log), days since last pump.
pub const CHANNEL_NUMERIC_FIELDS: usize = 3;
/// Stable stats fields for the target coin.
pub const TARGET_STABLE_FIELDS: usize = 4;

/// Dense id assignment for coins and channels, shared across the dataset
/// and the model's embedding tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdMaps {
    coin_to_id: BTreeMap<String, usize>,
    channel_to_id: BTreeMap<String, usize>,
}

impl IdMaps {
    pub fn build<'a>(
        coins: impl Iterator<Item = &'a str>,
        channels: impl Iterator<Item = &'a str>,
    ) -> Self {
        let mut coin_to_id = BTreeMap::new();
        let mut sorted_coins: Vec<&str> = coins.collect();
        sorted_coins.sort_unstable();
        sorted_coins.dedup();
        for (i, c) in sorted_coins.into_iter().enumerate() {
            coin_to_id.insert(c.to_string(), i + 2); // 0 = pad, 1 = unknown
        }
        let mut channel_to_id = BTreeMap::new();
        let mut sorted_channels: Vec<&str> = channels.collect();
        sorted_channels.sort_unstable();
        sorted_channels.dedup();
        for (i, c) in sorted_channels.into_iter().enumerate() {
            channel_to_id.insert(c.to_string(), i + 1); // 0 = unknown
        }
        IdMaps {
            coin_to_id,
            channel_to_id,
        }
    }

    pub fn coin_id(&self, coin: &str) -> usize {
        self.coin_to_id.get(coin).copied().unwrap_or(UNKNOWN_COIN_ID)
    }

    pub fn channel_id(&self, channel: &str) -> usize {
        self.channel_to_id
            .get(channel)
            .copied()
            .unwrap_or(UNKNOWN_CHANNEL_ID)
    }

    /// Embedding table size for coins (reserved rows included).
    pub fn coin_table_size(&self) -> usize {
        self.coin_to_id.len() + 2
    }

    pub fn channel_table_size(&self) -> usize {
        self.channel_to_id.len() + 1
    }

    pub fn coins(&self) -> impl Iterator<Item = (&String, usize)> {
        self.coin_to_id.iter().map(|(c, &i)| (c, i))
    }
}

/// One position of a pump-history sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqItem {
    pub coin: String,
    pub coin_id: usize,
    /// Pump time of the historical event this item refers to.
    pub pump_time: i64,
    pub numeric: Vec<f64>,
}

impl SeqItem {
    pub fn pad() -> Self {
        SeqItem {
            coin: String::new(),
            coin_id: PAD_COIN_ID,
            pump_time: 0,
            numeric: vec![0.0; SEQ_NUMERIC_FIELDS],
        }
    }
}

/// One (event, candidate-coin) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub event_ref: String,
    pub event_time: i64,
    pub channel: String,
    pub channel_id: usize,
    pub channel_numeric: Vec<f64>,
    pub target_coin: String,
    pub target_coin_id: usize,
    pub target_numeric: Vec<f64>,
    pub sequence: Vec<SeqItem>,
    pub seq_mask: Vec<bool>,
    pub label: u8,
}

/// Per-field normalization statistics fitted on the training split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub channel_mean: Vec<f64>,
    pub channel_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    pub seq_mean: Vec<f64>,
    pub seq_std: Vec<f64>,
    /// Fields whose train std was below 1e-9, zeroed everywhere.
    pub dropped_channel: Vec<bool>,
    pub dropped_target: Vec<bool>,
    pub dropped_seq: Vec<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub t1: i64,
    pub t2: i64,
    pub norm: Option<NormStats>,
}

/// Takes the N most recent history events strictly before `pump_time`,
/// most-recent-first (position 0 is the closest), padded to exactly N.
pub fn build_sequence(
    pump_time: i64,
    history: &[SeqItem],
    history_times: &[i64],
    n: usize,
) -> (Vec<SeqItem>, Vec<bool>) {
    assert_eq!(history.len(), history_times.len());
    debug_assert!(history_times.windows(2).all(|w| w[0] <= w[1]));
    let cutoff = history_times.partition_point(|&t| t < pump_time);
    let take = cutoff.min(n);
    let mut sequence = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for i in 0..take {
        sequence.push(history[cutoff - 1 - i].clone());
        mask.push(true);
    }
    while sequence.len() < n {
        sequence.push(SeqItem::pad());
        mask.push(false);
    }
    (sequence, mask)
}

/// Coins never used as candidates: stablecoins and similar, from config.
#[derive(Debug, Clone, Default)]
pub struct ExclusionList {
    coins: Vec<String>,
}

impl ExclusionList {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(coins: I) -> Self {
        ExclusionList {
            coins: coins.into_iter().map(|c| c.as_ref().to_uppercase()).collect(),
        }
    }

    pub fn contains(&self, coin: &str) -> bool {
        self.coins.iter().any(|c| c == coin)
    }
}

/// Assembles samples from pipeline outputs.
pub struct SampleBuilder<'a> {
    pub candles: &'a CandleStore,
    pub stats: &'a CoinStatsStore,
    pub listings: &'a ListingTable,
    pub ids: &'a IdMaps,
    pub exclusions: &'a ExclusionList,
    /// Maximum sequence length N.
    pub max_seq_len: usize,
}

fn stable_numeric(stats: &CoinStatsStore, coin: &str, t: i64) -> Vec<f64> {
    match stats.stable_at(coin, t) {
        Some(s) => vec![
            (1.0 + s.market_cap).ln(),
            (s.alexa_rank.max(1) as f64).ln(),
            (1.0 + s.reddit_subscribers as f64).ln(),
            (1.0 + s.twitter_followers as f64).ln(),
        ],
        None => vec![0.0; TARGET_STABLE_FIELDS],
    }
}

impl<'a> SampleBuilder<'a> {
    /// Labels all eligible coins for one event: one positive (the target),
    /// one negative per other listed, non-excluded coin paired with the
    /// event's pairing coin.
    pub fn label_candidates(
        &self,
        event: &MergedEvent,
        history: &[MergedEvent],
    ) -> Result<Vec<Sample>> {
        let listed = self.listings.listed_at(event.pump_time);
        if !listed.iter().any(|c| c == &event.target_coin) {
            return Err(Error::TargetNotListed {
                coin: event.target_coin.clone(),
                timestamp: event.pump_time,
            });
        }
        // The owning channel is the lexicographically first member.
        let channel = event.channels.first().cloned().unwrap_or_default();
        let channel_history: Vec<&MergedEvent> = history
            .iter()
            .filter(|e| e.pump_time < event.pump_time && e.channels.contains(&channel))
            .collect();
        let (seq_items, seq_times): (Vec<SeqItem>, Vec<i64>) = channel_history
            .iter()
            .map(|e| {
                (
                    SeqItem {
                        coin: e.target_coin.clone(),
                        coin_id: self.ids.coin_id(&e.target_coin),
                        pump_time: e.pump_time,
                        numeric: stable_numeric(self.stats, &e.target_coin, e.pump_time),
                    },
                    e.pump_time,
                )
            })
            .unzip();
        let (sequence, seq_mask) =
            build_sequence(event.pump_time, &seq_items, &seq_times, self.max_seq_len);

        let n_prior = channel_history.len() as f64;
        let mean_prior_mcap = if channel_history.is_empty() {
            0.0
        } else {
            channel_history
                .iter()
                .map(|e| {
                    self.stats
                        .stable_at(&e.target_coin, e.pump_time)
                        .map(|s| (1.0 + s.market_cap).ln())
                        .unwrap_or(0.0)
                })
                .sum::<f64>()
                / n_prior
        };
        let days_since_last = channel_history
            .last()
            .map(|e| (event.pump_time - e.pump_time) as f64 / 86400.0)
            .unwrap_or(0.0);
        let channel_numeric = vec![n_prior, mean_prior_mcap, days_since_last];
        let channel_id = self.ids.channel_id(&channel);

        let event_ref = format!("{}@{}", event.target_coin, event.pump_time);
        let mut samples = Vec::new();
        for coin in listed {
            if self.exclusions.contains(&coin) || coin == event.pairing_coin {
                continue;
            }
            let mut target_numeric = stable_numeric(self.stats, &coin, event.pump_time);
            target_numeric.extend(
                compute_window_features(self.candles, &coin, &event.pairing_coin, event.pump_time)
                    .flatten(),
            );
            samples.push(Sample {
                event_ref: event_ref.clone(),
                event_time: event.pump_time,
                channel: channel.clone(),
                channel_id,
                channel_numeric: channel_numeric.clone(),
                target_coin: coin.clone(),
                target_coin_id: self.ids.coin_id(&coin),
                target_numeric,
                sequence: sequence.clone(),
                seq_mask: seq_mask.clone(),
                label: u8::from(coin == event.target_coin),
            });
        }
        Ok(samples)
    }

    /// Builds samples for every event, each sequence drawn only from
    /// strictly earlier events.
    pub fn build_all(&self, events: &[MergedEvent]) -> Result<Vec<Sample>> {
        let mut sorted: Vec<MergedEvent> = events.to_vec();
        sorted.sort_by_key(|e| (e.pump_time, e.target_coin.clone()));
        let mut samples = Vec::new();
        for event in &sorted {
            samples.extend(self.label_candidates(event, &sorted)?);
        }
        Ok(samples)
    }
}

/// Splits samples by event time: train < t1, validation in [t1, t2),
/// test >= t2.
pub fn temporal_split(samples: Vec<Sample>, t1: i64, t2: i64) -> Result<DatasetSplit> {
    assert!(t1 < t2);
    let mut split = DatasetSplit {
        t1,
        t2,
        ..Default::default()
    };
    for s in samples {
        if s.event_time < t1 {
            split.train.push(s);
        } else if s.event_time < t2 {
            split.validation.push(s);
        } else {
            split.test.push(s);
        }
    }
    for (name, part) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        if !part.iter().any(|s| s.label == 1) {
            return Err(Error::EmptySplit {
                which: name.to_string(),
            });
        }
    }
    Ok(split)
}

/// Checks that no sample's sequence references its own event or any later
/// event; returns the number of violations.
pub fn leakage_violations(split: &DatasetSplit) -> usize {
    let check = |samples: &[Sample]| -> usize {
        samples
            .iter()
            .map(|s| {
                s.sequence
                    .iter()
                    .zip(&s.seq_mask)
                    .filter(|(item, &m)| m && item.pump_time >= s.event_time)
                    .count()
            })
            .sum()
    };
    check(&split.train) + check(&split.validation) + check(&split.test)
}

fn fit_field_stats(rows: Vec<&[f64]>, n_fields: usize) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    let mut mean = vec![0.0; n_fields];
    let mut count: f64 = 0.0;
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(*row) {
            *m += v;
        }
        count += 1.0;
    }
    for m in &mut mean {
        *m /= count.max(1.0);
    }
    let mut var = vec![0.0; n_fields];
    for row in &rows {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(*row) {
            *v += (x - m).powi(2);
        }
    }
    let mut std = Vec::with_capacity(n_fields);
    let mut dropped = Vec::with_capacity(n_fields);
    for v in var {
        let s = (v / count.max(1.0)).sqrt();
        if s < 1e-9 {
            std.push(1.0);
            dropped.push(true);
        } else {
            std.push(s);
            dropped.push(false);
        }
    }
    (mean, std, dropped)
}

fn apply_norm(row: &mut [f64], mean: &[f64], std: &[f64], dropped: &[bool]) {
    for i in 0..row.len() {
        if dropped[i] {
            row[i] = 0.0;
        } else {
            row[i] = (row[i] - mean[i]) / std[i];
        }
    }
}

/// Z-scores every real-valued field with statistics computed on the
/// training split only; zero-variance fields are dropped (zeroed). Id
/// fields are untouched; padded sequence positions stay null.
pub fn normalize(mut split: DatasetSplit) -> Result<DatasetSplit> {
    if split.train.is_empty() {
        return Err(Error::EmptySplit {
            which: "train".into(),
        });
    }
    let (channel_mean, channel_std, dropped_channel) = fit_field_stats(
        split.train.iter().map(|s| s.channel_numeric.as_slice()).collect(),
        CHANNEL_NUMERIC_FIELDS,
    );
    let n_target = split.train[0].target_numeric.len();
    let (target_mean, target_std, dropped_target) = fit_field_stats(
        split.train.iter().map(|s| s.target_numeric.as_slice()).collect(),
        n_target,
    );
    let mut seq_rows: Vec<&[f64]> = Vec::new();
    for s in &split.train {
        for (item, &m) in s.sequence.iter().zip(&s.seq_mask) {
            if m {
                seq_rows.push(&item.numeric);
            }
        }
    }
    let (seq_mean, seq_std, dropped_seq) = if seq_rows.is_empty() {
        (
            vec![0.0; SEQ_NUMERIC_FIELDS],
            vec![1.0; SEQ_NUMERIC_FIELDS],
            vec![true; SEQ_NUMERIC_FIELDS],
        )
    } else {
        fit_field_stats(seq_rows, SEQ_NUMERIC_FIELDS)
    };
    let norm = NormStats {
        channel_mean,
        channel_std,
        target_mean,
        target_std,
        seq_mean,
        seq_std,
        dropped_channel,
        dropped_target,
        dropped_seq,
    };
    for part in [&mut split.train, &mut split.validation, &mut split.test] {
        for s in part.iter_mut() {
            apply_sample_norm(s, &norm);
        }
    }
    split.norm = Some(norm);
    Ok(split)
}

/// Applies fitted normalization to one sample (used at predict time too).
pub fn apply_sample_norm(s: &mut Sample, norm: &NormStats) {
    apply_norm(
        &mut s.channel_numeric,
        &norm.channel_mean,
        &norm.channel_std,
        &norm.dropped_channel,
    );
    apply_norm(
        &mut s.target_numeric,
        &norm.target_mean,
        &norm.target_std,
        &norm.dropped_target,
    );
    for (item, &m) in s.sequence.iter_mut().zip(&s.seq_mask) {
        if m {
            apply_norm(&mut item.numeric, &norm.seq_mean, &norm.seq_std, &norm.dropped_seq);
        }
    }
}

/// Serializes samples as JSON-Lines with a schema-version header line.
pub fn write_samples_jsonl(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", serde_json::json!({"schema_version": 1}))?;
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_samples_jsonl(path: &Path) -> Result<Vec<Sample>> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header: serde_json::Value = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::MissingInput(format!("{}: empty file", path.display()))),
    };
    if header.get("schema_version").and_then(|v| v.as_u64()) != Some(1) {
        return Err(Error::ConfigError(format!(
            "{}: unsupported sample schema",
            path.display()
        )));
    }
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            samples.push(serde_json::from_str(&line)?);
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::CoinStats;

    fn item(coin: &str, v: f64) -> SeqItem {
        SeqItem {
            coin: coin.into(),
            coin_id: 2,
            pump_time: 0,
            numeric: vec![v; SEQ_NUMERIC_FIELDS],
        }
    }

    #[test]
    fn sequence_padding_rule() {
        let history = vec![item("A", 1.0), item("B", 2.0), item("C", 3.0)];
        let times = vec![100, 200, 300];
        let (seq, mask) = build_sequence(1000, &history, &times, 5);
        assert_eq!(mask, vec![true, true, true, false, false]);
        // Most-recent-first ordering.
        assert_eq!(seq[0].coin, "C");
        assert_eq!(seq[1].coin, "B");
        assert_eq!(seq[2].coin, "A");
        assert_eq!(seq[3], SeqItem::pad());
    }

    #[test]
    fn sequence_truncation_keeps_most_recent() {
        let history: Vec<SeqItem> = (0..25).map(|i| item(&format!("C{i}"), i as f64)).collect();
        let times: Vec<i64> = (0..25).map(|i| i * 100).collect();
        let (seq, mask) = build_sequence(10_000, &history, &times, 20);
        assert!(mask.iter().all(|&m| m));
        assert_eq!(seq[0].coin, "C24");
        assert_eq!(seq[19].coin, "C5");
    }

    #[test]
    fn sequence_empty_history() {
        let (seq, mask) = build_sequence(1000, &[], &[], 4);
        assert!(mask.iter().all(|&m| !m));
        assert!(seq.iter().all(|s| s.coin_id == PAD_COIN_ID));
    }

    #[test]
    fn sequence_strictly_before_pump_time() {
        let history = vec![item("A", 1.0), item("B", 2.0)];
        let times = vec![100, 200];
        let (_, mask) = build_sequence(200, &history, &times, 3);
        assert_eq!(mask, vec![true, false, false]);
    }

    fn fixture() -> (CandleStore, CoinStatsStore, ListingTable, IdMaps) {
        let mut candles = CandleStore::new();
        let mut stats = CoinStatsStore::default();
        let coins = ["AAA", "BBB", "CCC", "DDD"];
        for (ci, coin) in coins.iter().enumerate() {
            let series: Vec<crate::market::Candle> = (0..400)
                .map(|h| {
                    let close = 1.0 + ci as f64;
                    crate::market::Candle {
                        open_time: h * 3600,
                        open: close,
                        high: close * 1.01,
                        low: close * 0.99,
                        close,
                        volume: 1.0,
                    }
                })
                .collect();
            candles.insert_series(coin, "BTC", series);
            for day in 0..20 {
                stats.insert(CoinStats {
                    coin: coin.to_string(),
                    as_of: day * 86400,
                    market_cap: 1e6 * (ci + 1) as f64,
                    alexa_rank: 100,
                    reddit_subscribers: 10,
                    twitter_followers: 10,
                });
            }
        }
        let listings = ListingTable {
            rows: coins.iter().map(|c| (c.to_string(), 0, i64::MAX)).collect(),
        };
        let ids = IdMaps::build(coins.iter().copied(), ["ch1", "ch2"].into_iter());
        (candles, stats, listings, ids)
    }

    fn merged(channel: &str, t: i64, target: &str) -> MergedEvent {
        MergedEvent {
            pump_time: t,
            channels: vec![channel.to_string()],
            exchange: "binance".into(),
            pairing_coin: "BTC".into(),
            target_coin: target.into(),
        }
    }

    #[test]
    fn label_candidates_counts() {
        let (candles, stats, listings, ids) = fixture();
        let exclusions = ExclusionList::new(["DDD"]);
        let builder = SampleBuilder {
            candles: &candles,
            stats: &stats,
            listings: &listings,
            ids: &ids,
            exclusions: &exclusions,
            max_seq_len: 5,
        };
        let event = merged("ch1", 380 * 3600, "AAA");
        let samples = builder.label_candidates(&event, &[]).unwrap();
        // 4 listed - 1 excluded = 3 candidates, 1 positive.
        assert_eq!(samples.len(), 3);
        assert_eq!(samples.iter().filter(|s| s.label == 1).count(), 1);
        for s in &samples {
            if s.label == 0 {
                assert_ne!(s.target_coin, "AAA");
            }
        }
    }

    #[test]
    fn target_not_listed_rejected() {
        let (candles, stats, listings, ids) = fixture();
        let exclusions = ExclusionList::default();
        let builder = SampleBuilder {
            candles: &candles,
            stats: &stats,
            listings: &listings,
            ids: &ids,
            exclusions: &exclusions,
            max_seq_len: 5,
        };
        let event = merged("ch1", 380 * 3600, "ZZZ");
        assert!(matches!(
            builder.label_candidates(&event, &[]),
            Err(Error::TargetNotListed { .. })
        ));
    }

    #[test]
    fn sequences_use_only_prior_events() {
        let (candles, stats, listings, ids) = fixture();
        let exclusions = ExclusionList::default();
        let builder = SampleBuilder {
            candles: &candles,
            stats: &stats,
            listings: &listings,
            ids: &ids,
            exclusions: &exclusions,
            max_seq_len: 5,
        };
        let events = vec![
            merged("ch1", 200 * 3600, "AAA"),
            merged("ch1", 300 * 3600, "BBB"),
            merged("ch1", 390 * 3600, "CCC"),
        ];
        let samples = builder.build_all(&events).unwrap();
        for s in &samples {
            let real: usize = s.seq_mask.iter().filter(|&&m| m).count();
            match s.event_time / 3600 {
                200 => assert_eq!(real, 0),
                300 => assert_eq!(real, 1),
                390 => assert_eq!(real, 2),
                _ => unreachable!(),
            }
            // Most recent first: the 390h event sees BBB then AAA.
            if s.event_time == 390 * 3600 {
                assert_eq!(s.sequence[0].coin, "BBB");
                assert_eq!(s.sequence[1].coin, "AAA");
            }
        }
    }

    fn toy_samples() -> Vec<Sample> {
        let (candles, stats, listings, ids) = fixture();
        let exclusions = ExclusionList::default();
        let builder = SampleBuilder {
            candles: &candles,
            stats: &stats,
            listings: &listings,
            ids: &ids,
            exclusions: &exclusions,
            max_seq_len: 3,
        };
        let events = vec![
            merged("ch1", 100 * 3600, "AAA"),
            merged("ch1", 200 * 3600, "BBB"),
            merged("ch2", 300 * 3600, "CCC"),
        ];
        builder.build_all(&events).unwrap()
    }

    #[test]
    fn temporal_split_boundaries() {
        let samples = toy_samples();
        let split = temporal_split(samples, 150 * 3600, 250 * 3600).unwrap();
        assert!(split.train.iter().all(|s| s.event_time < 150 * 3600));
        assert!(split
            .validation
            .iter()
            .all(|s| s.event_time >= 150 * 3600 && s.event_time < 250 * 3600));
        assert!(split.test.iter().all(|s| s.event_time >= 250 * 3600));
        assert_eq!(leakage_violations(&split), 0);
    }

    #[test]
    fn empty_partition_rejected() {
        let samples = toy_samples();
        // Everything before t1: validation and test empty.
        assert!(matches!(
            temporal_split(samples, 400 * 3600, 500 * 3600),
            Err(Error::EmptySplit { .. })
        ));
    }

    #[test]
    fn normalize_train_mean_zero() {
        let samples = toy_samples();
        let split = temporal_split(samples, 150 * 3600, 250 * 3600).unwrap();
        let split = normalize(split).unwrap();
        let norm = split.norm.as_ref().unwrap();
        let n_fields = split.train[0].target_numeric.len();
        for f in 0..n_fields {
            if norm.dropped_target[f] {
                for s in &split.train {
                    assert_eq!(s.target_numeric[f], 0.0);
                }
                continue;
            }
            let mean: f64 = split.train.iter().map(|s| s.target_numeric[f]).sum::<f64>()
                / split.train.len() as f64;
            assert!(mean.abs() < 1e-9, "field {f} mean {mean}");
        }
    }

    #[test]
    fn normalize_constant_field_dropped() {
        // All channel_numeric fields are identical for single-event-history
        // channels; craft one constant field directly.
        let mut samples = toy_samples();
        for s in &mut samples {
            s.channel_numeric[0] = 7.0;
        }
        let split = temporal_split(samples, 150 * 3600, 250 * 3600).unwrap();
        let split = normalize(split).unwrap();
        assert!(split.norm.as_ref().unwrap().dropped_channel[0]);
        for s in &split.train {
            assert_eq!(s.channel_numeric[0], 0.0);
        }
    }

    #[test]
    fn normalize_round_trip_non_dropped() {
        let samples = toy_samples();
        let originals: Vec<Vec<f64>> = samples.iter().map(|s| s.target_numeric.clone()).collect();
        let split = temporal_split(samples, 150 * 3600, 250 * 3600).unwrap();
        let n_train = split.train.len();
        let split = normalize(split).unwrap();
        let norm = split.norm.as_ref().unwrap();
        for (s, orig) in split.train.iter().zip(&originals[..n_train]) {
            for f in 0..orig.len() {
                if !norm.dropped_target[f] {
                    let recovered = s.target_numeric[f] * norm.target_std[f] + norm.target_mean[f];
                    let rel = (recovered - orig[f]).abs() / orig[f].abs().max(1.0);
                    assert!(rel <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn samples_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.jsonl");
        let samples = toy_samples();
        write_samples_jsonl(&path, &samples).unwrap();
        let loaded = read_samples_jsonl(&path).unwrap();
        assert_eq!(loaded, samples);
    }
}
