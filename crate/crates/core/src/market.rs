//! OHLCV and coin-statistics fixtures: candle store, windowed
//! market-movement features, and returns.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window lengths (hours) for market-movement features.
pub const WINDOWS_HOURS: [i64; 8] = [1, 3, 6, 12, 24, 48, 60, 72];

/// Nearest-candle lookup tolerance at window endpoints.
pub const ENDPOINT_TOLERANCE_SECS: i64 = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub open_time: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Candle {
    fn validate(&self) -> std::result::Result<(), String> {
        let body_lo = self.open.min(self.close);
        let body_hi = self.open.max(self.close);
        if !(self.low <= body_lo && body_hi <= self.high) {
            return Err(format!(
                "price invariant violated: low {} open {} close {} high {}",
                self.low, self.open, self.close, self.high
            ));
        }
        if self.volume < 0.0 {
            return Err(format!("negative volume {}", self.volume));
        }
        if !(self.open.is_finite()
            && self.high.is_finite()
            && self.low.is_finite()
            && self.close.is_finite()
            && self.volume.is_finite())
        {
            return Err("non-finite field".into());
        }
        Ok(())
    }
}

/// Daily stable statistics for one coin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinStats {
    pub coin: String,
    /// UTC seconds of the daily record.
    pub as_of: i64,
    pub market_cap: f64,
    pub alexa_rank: u64,
    pub reddit_subscribers: u64,
    pub twitter_followers: u64,
}

/// Immutable in-memory candle store keyed by (coin, pairing).
#[derive(Debug, Clone, Default)]
pub struct CandleStore {
    series: BTreeMap<(String, String), Vec<Candle>>,
    /// Count of time gaps (missing candles between loaded rows) per pair.
    gaps: BTreeMap<(String, String), usize>,
}

impl CandleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(String, String)> {
        self.series.keys()
    }

    pub fn len(&self) -> usize {
        self.series.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn gap_count(&self, coin: &str, pairing: &str) -> usize {
        self.gaps
            .get(&(coin.to_string(), pairing.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn insert_series(&mut self, coin: &str, pairing: &str, candles: Vec<Candle>) {
        let mut gaps = 0;
        if candles.len() > 1 {
            let step = candles
                .windows(2)
                .map(|w| w[1].open_time - w[0].open_time)
                .min()
                .unwrap_or(60);
            for w in candles.windows(2) {
                if w[1].open_time - w[0].open_time > step {
                    gaps += 1;
                }
            }
        }
        let key = (coin.to_string(), pairing.to_string());
        self.gaps.insert(key.clone(), gaps);
        self.series.insert(key, candles);
    }

    /// Loads one CSV fixture with header open_time,open,high,low,close,volume.
    pub fn load_file(&mut self, path: &Path, coin: &str, pairing: &str) -> Result<()> {
        let mut reader = csv::ReaderBuilder::new().from_path(path)?;
        let mut candles: Vec<Candle> = Vec::new();
        for (i, record) in reader.deserialize::<Candle>().enumerate() {
            let line = i + 2; // header is line 1
            let candle = record.map_err(|e| Error::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            candle.validate().map_err(|reason| Error::MalformedRow {
                line,
                reason,
            })?;
            if let Some(last) = candles.last() {
                if candle.open_time <= last.open_time {
                    return Err(Error::NonMonotonicTime {
                        line,
                        coin: coin.to_string(),
                        pairing: pairing.to_string(),
                    });
                }
            }
            candles.push(candle);
        }
        self.insert_series(coin, pairing, candles);
        Ok(())
    }

    /// Loads every `{COIN}_{PAIRING}.csv` file in a directory.
    pub fn load_dir(&mut self, dir: &Path) -> Result<()> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        paths.sort();
        for path in paths {
            let stem = path.file_stem().unwrap().to_string_lossy().to_string();
            let Some((coin, pairing)) = stem.rsplit_once('_') else {
                continue;
            };
            let (coin, pairing) = (coin.to_string(), pairing.to_string());
            self.load_file(&path, &coin, &pairing)?;
        }
        Ok(())
    }

    pub fn dump_file(&self, path: &Path, coin: &str, pairing: &str) -> Result<()> {
        let key = (coin.to_string(), pairing.to_string());
        let candles = self.series.get(&key).ok_or_else(|| Error::MissingData {
            coin: coin.to_string(),
            pairing: pairing.to_string(),
            timestamp: 0,
        })?;
        let mut w = csv::Writer::from_path(path)?;
        for c in candles {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Nearest candle to `t` within the endpoint tolerance.
    pub fn nearest(&self, coin: &str, pairing: &str, t: i64) -> Option<&Candle> {
        let key = (coin.to_string(), pairing.to_string());
        let series = self.series.get(&key)?;
        let idx = series.partition_point(|c| c.open_time < t);
        let mut best: Option<&Candle> = None;
        for cand in [idx.checked_sub(1).and_then(|i| series.get(i)), series.get(idx)]
            .into_iter()
            .flatten()
        {
            let dist = (cand.open_time - t).abs();
            if dist <= ENDPOINT_TOLERANCE_SECS
                && best.is_none_or(|b| dist < (b.open_time - t).abs())
            {
                best = Some(cand);
            }
        }
        best
    }

    /// All candles with open_time in [from, to].
    pub fn range(&self, coin: &str, pairing: &str, from: i64, to: i64) -> &[Candle] {
        let key = (coin.to_string(), pairing.to_string());
        let Some(series) = self.series.get(&key) else {
            return &[];
        };
        let lo = series.partition_point(|c| c.open_time < from);
        let hi = series.partition_point(|c| c.open_time <= to);
        &series[lo..hi]
    }
}

/// Return over [t-(x+1)h, t-1h]: (close(t-1h) - close(t-(x+1)h)) / close(t-(x+1)h).
pub fn window_return(
    store: &CandleStore,
    coin: &str,
    pairing: &str,
    pump_time: i64,
    x_hours: i64,
) -> Result<f64> {
    let t_end = pump_time - 3600;
    let t_start = pump_time - (x_hours + 1) * 3600;
    let missing = |t| Error::MissingData {
        coin: coin.to_string(),
        pairing: pairing.to_string(),
        timestamp: t,
    };
    let start = store
        .nearest(coin, pairing, t_start)
        .ok_or_else(|| missing(t_start))?;
    let end = store
        .nearest(coin, pairing, t_end)
        .ok_or_else(|| missing(t_end))?;
    Ok((end.close - start.close) / start.close)
}

/// One window's market movement block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBlock {
    pub x_hours: i64,
    pub ret: f64,
    pub mean_volume: f64,
    pub max_volume: f64,
    /// Std of log-returns between consecutive candles in the window.
    pub volatility: f64,
    /// True when the window could not be computed and values were imputed
    /// to zero.
    pub imputed: bool,
}

/// Market movement features over all configured windows, ending one hour
/// before pump time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFeatures {
    pub blocks: Vec<WindowBlock>,
}

impl WindowFeatures {
    pub fn imputed_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.imputed).count()
    }

    /// Flattens to (values, one missing-flag per window).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.blocks.len() * 5);
        for b in &self.blocks {
            out.push(b.ret);
            out.push(b.mean_volume);
            out.push(b.max_volume);
            out.push(b.volatility);
            out.push(if b.imputed { 1.0 } else { 0.0 });
        }
        out
    }
}

/// Full feature block over every window length, with zero-imputation and a
/// missing flag for windows the store cannot cover.
pub fn compute_window_features(
    store: &CandleStore,
    coin: &str,
    pairing: &str,
    pump_time: i64,
) -> WindowFeatures {
    let blocks = WINDOWS_HOURS
        .iter()
        .map(|&x| {
            match window_return(store, coin, pairing, pump_time, x) {
                Ok(ret) => {
                    let from = pump_time - (x + 1) * 3600;
                    let to = pump_time - 3600;
                    let candles = store.range(coin, pairing, from, to);
                    let n = candles.len() as f64;
                    let mean_volume = candles.iter().map(|c| c.volume).sum::<f64>() / n.max(1.0);
                    let max_volume = candles.iter().map(|c| c.volume).fold(0.0, f64::max);
                    let volatility = log_return_std(candles);
                    WindowBlock {
                        x_hours: x,
                        ret,
                        mean_volume,
                        max_volume,
                        volatility,
                        imputed: false,
                    }
                }
                Err(_) => WindowBlock {
                    x_hours: x,
                    ret: 0.0,
                    mean_volume: 0.0,
                    max_volume: 0.0,
                    volatility: 0.0,
                    imputed: true,
                },
            }
        })
        .collect();
    WindowFeatures { blocks }
}

fn log_return_std(candles: &[Candle]) -> f64 {
    if candles.len() < 2 {
        return 0.0;
    }
    let rets: Vec<f64> = candles
        .windows(2)
        .map(|w| (w[1].close / w[0].close).ln())
        .collect();
    let mean = rets.iter().sum::<f64>() / rets.len() as f64;
    let var = rets.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rets.len() as f64;
    var.sqrt()
}

/// Stable coin statistics table with at-or-before daily lookup.
#[derive(Debug, Clone, Default)]
pub struct CoinStatsStore {
    by_coin: BTreeMap<String, Vec<CoinStats>>,
}

impl CoinStatsStore {
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_path(path)?;
        let mut by_coin: BTreeMap<String, Vec<CoinStats>> = BTreeMap::new();
        for record in reader.deserialize::<CoinStats>() {
            let s = record?;
            by_coin.entry(s.coin.clone()).or_default().push(s);
        }
        for series in by_coin.values_mut() {
            series.sort_by_key(|s| s.as_of);
        }
        Ok(CoinStatsStore { by_coin })
    }

    pub fn insert(&mut self, stats: CoinStats) {
        let series = self.by_coin.entry(stats.coin.clone()).or_default();
        series.push(stats);
        series.sort_by_key(|s| s.as_of);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for series in self.by_coin.values() {
            for s in series {
                w.serialize(s)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Stable stats snapshot: the nearest daily record at or before
    /// t - 72h, matching the three-days-before collection rule.
    pub fn stable_at(&self, coin: &str, pump_time: i64) -> Option<&CoinStats> {
        let cutoff = pump_time - 72 * 3600;
        let series = self.by_coin.get(coin)?;
        let idx = series.partition_point(|s| s.as_of <= cutoff);
        idx.checked_sub(1).and_then(|i| series.get(i))
    }

    pub fn coins(&self) -> impl Iterator<Item = &String> {
        self.by_coin.keys()
    }
}

/// Exchange listing intervals: a coin is eligible for an event when the
/// pump time falls inside its listing interval.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ListingTable {
    /// (coin, listed_from, listed_to); listed_to = i64::MAX means still
    /// listed.
    pub rows: Vec<(String, i64, i64)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ListingRow {
    coin: String,
    listed_from: i64,
    listed_to: i64,
}

impl ListingTable {
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.deserialize::<ListingRow>() {
            let r = record?;
            rows.push((r.coin, r.listed_from, r.listed_to));
        }
        Ok(ListingTable { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (coin, from, to) in &self.rows {
            w.serialize(ListingRow {
                coin: coin.clone(),
                listed_from: *from,
                listed_to: *to,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn listed_at(&self, t: i64) -> Vec<String> {
        let mut coins: Vec<String> = self
            .rows
            .iter()
            .filter(|(_, from, to)| *from <= t && t <= *to)
            .map(|(c, _, _)| c.clone())
            .collect();
        coins.sort();
        coins.dedup();
        coins
    }
}

/// Streams all candles of a store in global timestamp order; used by the
/// replay subcommand for integration tests.
pub fn replay<'a>(store: &'a CandleStore) -> Vec<(&'a str, &'a str, &'a Candle)> {
    let mut all: Vec<(&str, &str, &Candle)> = Vec::new();
    for ((coin, pairing), series) in &store.series {
        for c in series {
            all.push((coin, pairing, c));
        }
    }
    all.sort_by(|a, b| {
        a.2.open_time
            .cmp(&b.2.open_time)
            .then_with(|| a.0.cmp(b.0))
            .then_with(|| a.1.cmp(b.1))
    });
    all
}

/// Writes a replay stream as CSV lines: coin,pairing,open_time,close,volume.
pub fn write_replay(store: &CandleStore, out: &mut dyn Write) -> Result<()> {
    for (coin, pairing, c) in replay(store) {
        writeln!(
            out,
            "{coin},{pairing},{},{},{}",
            c.open_time, c.close, c.volume
        )?;
    }
    Ok(())
}
