//! Deterministic synthetic-world generator: pump channels with drifting
//! coin pools, chatter channels for embedding pre-training, hourly OHLCV
//! series with injected pre-pump drift, listings, coin stats, and ground
//! truth for auditing the extraction pipeline.
//!
//! Signal structure: coins sit on a line; each channel's pool is a sliding
//! window on that line that drifts a little with every event. Recent
//! history therefore locates the current pool better than the channel's
//! static identity, and stale history actively misleads — which is what
//! the model comparisons need. Market cap correlates with line position,
//! and chatter co-mentions nearby coins so word embeddings pick up the
//! same geometry.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{is_stopword, Lexicon, Message};
use crate::error::{Error, Result};
use crate::events::{EventLexicons, PumpEvent};
use crate::market::{Candle, CandleStore, CoinStats, CoinStatsStore, ListingTable};

pub const EXCHANGE: &str = "binance";
pub const PAIRING: &str = "BTC";

/// Hour-aligned epoch the world starts at.
pub const T0: i64 = 444_444 * 3600;

/// Hours of candle history before the first event (> the 72h feature
/// window plus slack).
const LEAD_HOURS: i64 = 96;

/// Pre-pump drift starts this many hours before the pump.
const DRIFT_START_HOURS: i64 = 57;

const PUMP_KEYWORDS: [&str; 6] = ["pump", "profit", "signal", "reveal", "countdown", "shill"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub n_channels: usize,
    pub n_chatter_channels: usize,
    pub n_coins: usize,
    pub coins_per_channel_pool: usize,
    pub events_per_channel: usize,
    /// Hours between consecutive events of one channel.
    pub event_interval_hours: i64,
    /// Total relative pre-pump return injected for pumped coins.
    pub pre_pump_drift: f64,
    /// Probability a planted event's release message is withheld.
    pub message_noise: f64,
    /// Probability a second bare symbol is planted in the session.
    pub ambiguous_rate: f64,
    /// Probability an event's target is drawn off-pool (history noise).
    pub history_noise: f64,
    /// Stddev of the pool window's random-walk step, in line slots per
    /// event. Older history is therefore noisier, not just shifted.
    pub pool_drift_step: f64,
    /// Deterministic scan speed of the pool window, in line slots per
    /// event. The window sweeps the line and reflects at the ends, so an
    /// unweighted average of the last N window positions lags the walk by
    /// about N/2 * velocity slots; only recent history tracks it.
    pub pool_velocity: f64,
    /// Targets are drawn from the first this-many slots of the pool
    /// window, so the target position itself is close to the walk and
    /// recent history is the best predictor of the next target.
    pub target_jitter: usize,
    /// Probability an event is mirrored in a second channel.
    pub federation_rate: f64,
    /// Fraction of test-period targets drawn from coins never pumped
    /// before the test boundary.
    pub cold_start_fraction: f64,
    /// One in this many line positions is reserved as a cold-start coin.
    pub cold_spacing: usize,
    pub chatter_docs_per_channel: usize,
    /// Organic (non-pump) price rallies per coin over the whole span.
    pub rallies_per_coin: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            n_channels: 50,
            n_chatter_channels: 8,
            n_coins: 300,
            coins_per_channel_pool: 12,
            events_per_channel: 16,
            event_interval_hours: 140,
            pre_pump_drift: 0.25,
            message_noise: 0.0,
            ambiguous_rate: 0.0,
            history_noise: 0.0,
            pool_drift_step: 2.0,
            pool_velocity: 3.0,
            target_jitter: 4,
            federation_rate: 0.0,
            cold_start_fraction: 0.3,
            cold_spacing: 6,
            chatter_docs_per_channel: 150,
            rallies_per_coin: 4,
        }
    }
}

impl WorldConfig {
    pub fn span_hours(&self) -> i64 {
        LEAD_HOURS + self.events_per_channel as i64 * self.event_interval_hours + 24
    }

    /// Largest plausible single step of the walk: the scan velocity plus
    /// three standard deviations of the noise term.
    fn max_step(&self) -> f64 {
        self.pool_velocity + 3.0 * self.pool_drift_step
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.n_channels,
            self.n_coins,
            self.coins_per_channel_pool,
            self.events_per_channel,
            self.cold_spacing,
        ];
        if counts.iter().any(|&c| c == 0) || self.event_interval_hours < 1 {
            return Err(Error::InfeasibleConfig("all counts must be >= 1".into()));
        }
        if self.events_per_channel < 3 {
            return Err(Error::InfeasibleConfig(
                "need >= 3 events per channel for a train/validation/test split".into(),
            ));
        }
        for (name, f) in [
            ("message_noise", self.message_noise),
            ("ambiguous_rate", self.ambiguous_rate),
            ("history_noise", self.history_noise),
            ("federation_rate", self.federation_rate),
            ("cold_start_fraction", self.cold_start_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InfeasibleConfig(format!("{name} must be in [0,1]")));
            }
        }
        if self.pre_pump_drift < 0.0 {
            return Err(Error::InfeasibleConfig("drift must be >= 0".into()));
        }
        if self.n_coins < 2 * self.coins_per_channel_pool {
            return Err(Error::InfeasibleConfig(
                "pools cannot be heterogeneous: n_coins < 2 * pool size".into(),
            ));
        }
        if self.pool_velocity < 0.0 || self.pool_drift_step < 0.0 {
            return Err(Error::InfeasibleConfig("pool walk terms must be >= 0".into()));
        }
        if ((self.n_coins - self.coins_per_channel_pool) as f64) < 2.0 * self.max_step() {
            return Err(Error::InfeasibleConfig(
                "line too short for the pool walk: raise n_coins or cut drift".into(),
            ));
        }
        if self.event_interval_hours < 48 {
            return Err(Error::InfeasibleConfig(
                "events closer than 48h would fuse into one session".into(),
            ));
        }
        Ok(())
    }

    /// Random-walk pool window starts per channel, one per event index.
    fn plan_pool_paths(&self, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let max = (self.n_coins - self.coins_per_channel_pool) as f64;
        let step = Normal::new(0.0, self.pool_drift_step.max(1e-12)).unwrap();
        (0..self.n_channels)
            .map(|c| {
                let mut pos = (c * (self.n_coins - self.coins_per_channel_pool)
                    / self.n_channels.max(1)) as f64;
                let mut dir = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                (0..self.events_per_channel)
                    .map(|_| {
                        pos += dir * self.pool_velocity + step.sample(rng);
                        if pos < 0.0 {
                            pos = -pos;
                            dir = 1.0;
                        } else if pos > max {
                            pos = 2.0 * max - pos;
                            dir = -1.0;
                        }
                        pos = pos.clamp(0.0, max);
                        pos.round() as usize
                    })
                    .collect()
            })
            .collect()
    }
}

fn pool_members(start: usize, width: usize) -> std::ops::Range<usize> {
    start..start + width
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    /// Countdown / announcement / review template (pump class).
    Lifecycle,
    /// Bare-symbol coin release.
    Release,
    Chatter,
}

/// Ground truth for one planted pump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub channel_id: String,
    pub pump_time: i64,
    pub exchange: String,
    pub pairing_coin: String,
    pub target_coin: String,
    /// Index into `planted` of the event this one mirrors.
    pub mirror_of: Option<usize>,
    /// Release message withheld (message noise) — extraction must miss it.
    pub suppressed: bool,
    /// A second bare symbol was planted — the session must go to review.
    pub ambiguous: bool,
}

#[derive(Debug)]
pub struct World {
    pub config: WorldConfig,
    /// Pool window start per channel per event index (generator internal,
    /// exposed for auditing the homogeneity contract).
    pub pool_paths: Vec<Vec<usize>>,
    /// Coin symbols in line-position order.
    pub coins: Vec<String>,
    pub cold_coins: BTreeSet<String>,
    /// Listed coins that never pump and never appear in chatter.
    pub quiet_coins: BTreeSet<String>,
    pub messages: Vec<Message>,
    pub message_kinds: Vec<MessageKind>,
    pub candles: CandleStore,
    pub listings: ListingTable,
    pub stats: CoinStatsStore,
    pub lexicons: EventLexicons,
    pub keywords: Lexicon,
    pub planted: Vec<PlantedEvent>,
    /// Mirrors actually planted (federation collisions are skipped).
    pub mirrors_planted: usize,
    /// Suggested temporal split boundaries.
    pub t1: i64,
    pub t2: i64,
}

fn symbols(n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut i: u32 = 0;
    while out.len() < n {
        let (a, b, c) = (i / 676 % 26, i / 26 % 26, i % 26);
        i += 1;
        let s: String = [a, b, c]
            .iter()
            .map(|&d| (b'A' + d as u8) as char)
            .collect();
        let lower = s.to_lowercase();
        if is_stopword(&lower)
            || lower == PAIRING.to_lowercase()
            || PUMP_KEYWORDS.contains(&lower.as_str())
        {
            continue;
        }
        out.push(s);
    }
    out
}

/// Adds a ramp to `mag` over [start, peak] then a 12h decay back to zero,
/// in log-price units, clipped to the profile bounds.
fn add_ramp(profile: &mut [f64], start: i64, peak: i64, mag: f64) {
    let len = (peak - start).max(1) as f64;
    for h in start.max(0)..peak.min(profile.len() as i64) {
        profile[h as usize] += mag * (h - start) as f64 / len;
    }
    for h in peak.max(0)..(peak + 12).min(profile.len() as i64) {
        profile[h as usize] += mag * (1.0 - (h - peak) as f64 / 12.0);
    }
}

struct Schedule {
    planted: Vec<PlantedEvent>,
    /// (line position of target, pump hour) per pump, for candle drift.
    pumps_by_coin: BTreeMap<usize, Vec<i64>>,
    mirrors: usize,
}

pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let coins = symbols(config.n_coins);
    let pos_of: BTreeMap<&str, usize> = coins.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let cold: BTreeSet<usize> = (0..config.n_coins)
        .filter(|p| p % config.cold_spacing == config.cold_spacing / 2)
        .collect();
    // Quiet coins are listed but never pumped and never mentioned in
    // chatter, so they stay out of the embedding pre-training corpus.
    let quiet: BTreeSet<usize> = (0..config.n_coins)
        .filter(|p| p % config.cold_spacing == 1 % config.cold_spacing && !cold.contains(p))
        .collect();

    let span_h = config.span_hours();
    let t_end = T0 + span_h * 3600;
    let epc = config.events_per_channel;
    // Split markers at 70% / 80% of the event index range.
    // 70/10/20 split by event index; tiny worlds still get at least one
    // event in the validation and test periods.
    let test_idx = (epc * 8 / 10).min(epc - 1).max(2);
    let val_idx = (epc * 7 / 10).min(test_idx - 1).max(1);
    let t1 = T0 + (LEAD_HOURS + val_idx as i64 * config.event_interval_hours) * 3600;
    let t2 = T0 + (LEAD_HOURS + test_idx as i64 * config.event_interval_hours) * 3600;

    let pool_paths = config.plan_pool_paths(&mut rng);
    let schedule = plan_events(config, &pool_paths, &coins, &cold, &quiet, t2, &mut rng);
    let (within, across) = pool_overlap(config, &pool_paths);
    if within <= across {
        return Err(Error::InfeasibleConfig(format!(
            "pool homogeneity contract failed: within {within:.2} <= across {across:.2}"
        )));
    }

    // Coin stats: market cap encodes line position; the rest is noise.
    let mut stats = CoinStatsStore::default();
    let mcap_noise = Normal::new(0.0, 0.05).unwrap();
    for (p, coin) in coins.iter().enumerate() {
        stats.insert(CoinStats {
            coin: coin.clone(),
            as_of: T0,
            market_cap: (10.0 + 0.015 * p as f64 + mcap_noise.sample(&mut rng)).exp(),
            alexa_rank: rng.gen_range(1_000..100_000),
            reddit_subscribers: rng.gen_range(100..50_000),
            twitter_followers: rng.gen_range(100..80_000),
        });
    }

    let listings = ListingTable {
        rows: coins.iter().map(|c| (c.clone(), T0, i64::MAX)).collect(),
    };

    let candles = build_candles(config, &coins, &schedule.pumps_by_coin, span_h, &mut rng)?;
    let (messages, kinds) = build_messages(config, &schedule.planted, &coins, &pos_of, &quiet, t_end, &mut rng);

    let lexicons = EventLexicons {
        exchanges: Lexicon::new([EXCHANGE]),
        pairing_coins: Lexicon::new([PAIRING]),
        listed_coins: Lexicon::new(coins.iter().map(|c| c.as_str())),
    };

    let world = World {
        config: config.clone(),
        pool_paths,
        cold_coins: cold.iter().map(|&p| coins[p].clone()).collect(),
        quiet_coins: quiet.iter().map(|&p| coins[p].clone()).collect(),
        coins,
        messages,
        message_kinds: kinds,
        candles,
        listings,
        stats,
        lexicons,
        keywords: Lexicon::new(PUMP_KEYWORDS),
        planted: schedule.planted,
        mirrors_planted: schedule.mirrors,
        t1,
        t2,
    };
    Ok(world)
}

fn plan_events(
    config: &WorldConfig,
    pool_paths: &[Vec<usize>],
    coins: &[String],
    cold: &BTreeSet<usize>,
    quiet: &BTreeSet<usize>,
    t2: i64,
    rng: &mut ChaCha8Rng,
) -> Schedule {
    let mut planted: Vec<PlantedEvent> = Vec::new();
    let mut pumps_by_coin: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    let mut event_times: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    let interval = config.event_interval_hours;

    for c in 0..config.n_channels {
        // Hour-aligned per-channel phase inside the shared cadence.
        let phase = (c as i64 * 997) % (interval / 2);
        for j in 0..config.events_per_channel {
            let t = T0 + (LEAD_HOURS + j as i64 * interval + phase) * 3600;
            let window = pool_members(pool_paths[c][j], config.coins_per_channel_pool);
            let in_test = t >= t2;
            let candidates: Vec<usize> = if rng.gen_bool(config.history_noise) {
                (0..config.n_coins)
                    .filter(|p| !cold.contains(p) && !quiet.contains(p))
                    .collect()
            } else if in_test && rng.gen_bool(config.cold_start_fraction) {
                let cold_in_window: Vec<usize> =
                    window.clone().filter(|p| cold.contains(p)).collect();
                if cold_in_window.is_empty() {
                    window
                        .clone()
                        .filter(|p| !cold.contains(p) && !quiet.contains(p))
                        .collect()
                } else {
                    cold_in_window
                }
            } else {
                let jitter = config.target_jitter.clamp(1, config.coins_per_channel_pool);
                let near: Vec<usize> = window
                    .clone()
                    .take(jitter)
                    .filter(|p| !cold.contains(p) && !quiet.contains(p))
                    .collect();
                if near.is_empty() {
                    window
                        .clone()
                        .filter(|p| !cold.contains(p) && !quiet.contains(p))
                        .collect()
                } else {
                    near
                }
            };
            let target = candidates[rng.gen_range(0..candidates.len())];
            pumps_by_coin.entry(target).or_default().push((t - T0) / 3600);
            event_times.entry(c).or_default().push(t);
            planted.push(PlantedEvent {
                channel_id: format!("pump{c:03}"),
                pump_time: t,
                exchange: EXCHANGE.into(),
                pairing_coin: PAIRING.into(),
                target_coin: coins[target].clone(),
                mirror_of: None,
                suppressed: rng.gen_bool(config.message_noise),
                ambiguous: rng.gen_bool(config.ambiguous_rate),
            });
        }
    }

    // Federation: mirror some events into dedicated aggregator channels
    // shortly after the original. Mirrors in one aggregator channel are
    // kept far enough apart that their sessions never fuse.
    let mut mirrors = 0;
    let n_mirror_channels = 4;
    let mut mirror_times: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    let base_count = planted.len();
    for idx in 0..base_count {
        if !rng.gen_bool(config.federation_rate) {
            continue;
        }
        let src = planted[idx].clone();
        let t = src.pump_time + rng.gen_range(5..45) * 60;
        let Some(k) = (0..n_mirror_channels).find(|k| {
            mirror_times
                .get(k)
                .map_or(true, |v| v.iter().all(|&o| (t - o).abs() >= 52 * 3600))
        }) else {
            continue;
        };
        mirror_times.entry(k).or_default().push(t);
        let pos = coins.iter().position(|s| *s == src.target_coin).unwrap();
        pumps_by_coin.entry(pos).or_default().push((t - T0) / 3600);
        planted.push(PlantedEvent {
            channel_id: format!("mirror{k:02}"),
            pump_time: t,
            mirror_of: Some(idx),
            suppressed: false,
            ambiguous: false,
            ..src
        });
        mirrors += 1;
    }
    planted.sort_by_key(|e| (e.pump_time, e.channel_id.clone()));
    Schedule { planted, pumps_by_coin, mirrors }
}

fn build_candles(
    config: &WorldConfig,
    coins: &[String],
    pumps_by_coin: &BTreeMap<usize, Vec<i64>>,
    span_h: i64,
    rng: &mut ChaCha8Rng,
) -> Result<CandleStore> {
    let mut store = CandleStore::new();
    let hourly_noise = Normal::new(0.0, 0.02).unwrap();
    let vol_noise = Normal::new(0.0, 0.3).unwrap();
    for (p, coin) in coins.iter().enumerate() {
        let base_ln = rng.gen_range(-9.0..-3.0);
        let vbase: f64 = rng.gen_range(1e3..1e5);
        let mut price_prof = vec![0.0; span_h as usize];
        let mut vol_prof = vec![0.0; span_h as usize];
        for &ph in pumps_by_coin.get(&p).map(|v| v.as_slice()).unwrap_or(&[]) {
            let mag = (1.0 + config.pre_pump_drift * rng.gen_range(0.4..1.0)).ln();
            add_ramp(&mut price_prof, ph - DRIFT_START_HOURS, ph, mag);
            add_ramp(&mut vol_prof, ph - DRIFT_START_HOURS, ph, 3f64.ln());
            // The pump hour itself: spike and collapse.
            if (ph as usize) < price_prof.len() {
                price_prof[ph as usize] += (1.0 + config.pre_pump_drift).ln();
                vol_prof[ph as usize] += 8f64.ln();
            }
        }
        for _ in 0..config.rallies_per_coin {
            let peak = rng.gen_range(0..span_h);
            let len = rng.gen_range(40..80);
            let mag = (1.0 + rng.gen_range(-0.35f64..0.5)).ln();
            add_ramp(&mut price_prof, peak - len, peak, mag);
            add_ramp(&mut vol_prof, peak - len, peak, 2f64.ln());
        }
        let mut series = Vec::with_capacity(span_h as usize);
        let mut prev_close = (base_ln + price_prof[0]).exp();
        for h in 0..span_h as usize {
            let close = (base_ln + price_prof[h] + hourly_noise.sample(rng)).exp();
            let open = prev_close;
            let u = rng.gen_range(0.0..0.01);
            let high = open.max(close) * (1.0 + u);
            let low = open.min(close) * (1.0 - u);
            let volume = vbase * (vol_prof[h] + vol_noise.sample(rng)).exp();
            series.push(Candle {
                open_time: T0 + h as i64 * 3600,
                open,
                high,
                low,
                close,
                volume,
            });
            prev_close = close;
        }
        store.insert_series(coin, PAIRING, series);
    }
    Ok(store)
}

const CHATTER_TEMPLATES: [&str; 4] = [
    "i think {A} and {B} look strong today maybe {C} too",
    "{A} {B} {C} volume rising on spot markets lately",
    "anyone still holding {A} or {B} this week",
    "chart for {A} looks a lot like {B} did last month",
];

const PLAIN_CHATTER: [&str; 4] = [
    "good morning everyone hope you all slept well",
    "what a day for the markets stay safe out there",
    "reminder to manage your risk and take breaks",
    "volume is thin today might just watch from the side",
];

fn build_messages(
    config: &WorldConfig,
    planted: &[PlantedEvent],
    coins: &[String],
    pos_of: &BTreeMap<&str, usize>,
    quiet: &BTreeSet<usize>,
    t_end: i64,
    rng: &mut ChaCha8Rng,
) -> (Vec<Message>, Vec<MessageKind>) {
    let mut messages = Vec::new();
    let mut kinds = Vec::new();
    let mut next_id: u64 = 1;
    let mut push = |msgs: &mut Vec<Message>, ks: &mut Vec<MessageKind>,
                    channel: &str, t: i64, text: String, kind: MessageKind| {
        msgs.push(Message {
            channel_id: channel.into(),
            message_id: next_id,
            timestamp: t,
            text,
        });
        ks.push(kind);
        next_id += 1;
    };

    for e in planted {
        let t = e.pump_time;
        let ch = e.channel_id.as_str();
        let lifecycle = [
            (t - 20 * 3600, format!(
                "big pump announcement in 20 hours on {EXCHANGE} pairing {PAIRING} get ready"
            )),
            (t - 4 * 3600, "pump countdown 4 hours left huge profit expected".to_string()),
            (t - 3600, "pump signal in 60 minutes stay tuned".to_string()),
            (t - 300, "coin reveal in 5 minutes this pump will be massive".to_string()),
        ];
        for (ts, text) in lifecycle {
            push(&mut messages, &mut kinds, ch, ts, text, MessageKind::Lifecycle);
        }
        if !e.suppressed {
            push(&mut messages, &mut kinds, ch, t, e.target_coin.clone(), MessageKind::Release);
        }
        if e.ambiguous {
            // A second bare symbol from the same neighbourhood.
            let p = pos_of[e.target_coin.as_str()];
            let other = if p + 1 < coins.len() { p + 1 } else { p - 1 };
            push(
                &mut messages,
                &mut kinds,
                ch,
                t + 600,
                coins[other].clone(),
                MessageKind::Release,
            );
        }
        push(
            &mut messages,
            &mut kinds,
            ch,
            t + 1800,
            "pump complete we hit 280 percent profit great job team".to_string(),
            MessageKind::Lifecycle,
        );
    }

    // Chatter channels: continuous streams co-mentioning nearby coins so
    // embeddings learn the line geometry. No pump keywords, ever.
    let width = config.coins_per_channel_pool;
    for c in 0..config.n_chatter_channels {
        let ch = format!("chat{c:02}");
        for _ in 0..config.chatter_docs_per_channel {
            let t = rng.gen_range(T0..t_end);
            let text = if rng.gen_bool(0.2) {
                PLAIN_CHATTER[rng.gen_range(0..PLAIN_CHATTER.len())].to_string()
            } else {
                let center = rng.gen_range(0..config.n_coins.saturating_sub(width).max(1));
                let tpl = CHATTER_TEMPLATES[rng.gen_range(0..CHATTER_TEMPLATES.len())];
                let elig: Vec<&str> = (center..center + width.min(config.n_coins - center))
                    .filter(|p| !quiet.contains(p))
                    .map(|p| coins[p].as_str())
                    .collect();
                let mut picks: Vec<&str> = (0..3)
                    .map(|_| elig[rng.gen_range(0..elig.len())])
                    .collect();
                picks.dedup();
                while picks.len() < 3 {
                    picks.push(elig[0]);
                }
                tpl.replace("{A}", picks[0])
                    .replace("{B}", picks[1])
                    .replace("{C}", picks[2])
            };
            push(&mut messages, &mut kinds, &ch, t, text, MessageKind::Chatter);
        }
    }

    // Stable global order for byte-identical serialization.
    let mut order: Vec<usize> = (0..messages.len()).collect();
    order.sort_by_key(|&i| (messages[i].timestamp, messages[i].message_id));
    let messages_sorted = order.iter().map(|&i| messages[i].clone()).collect();
    let kinds_sorted = order.iter().map(|&i| kinds[i]).collect();
    (messages_sorted, kinds_sorted)
}

/// Mean pairwise pool overlap within channels vs across channels, from the
/// planned pool paths.
pub fn pool_overlap(config: &WorldConfig, paths: &[Vec<usize>]) -> (f64, f64) {
    let overlap = |a: usize, b: usize| -> f64 {
        let (sa, sb) = (a.min(b), a.max(b));
        (config.coins_per_channel_pool as i64 - (sb - sa) as i64).max(0) as f64
    };
    let mut within = 0.0;
    let mut wn = 0.0f64;
    let mut across = 0.0;
    let mut an = 0.0f64;
    for c in 0..config.n_channels {
        for j in 0..config.events_per_channel {
            for j2 in (j + 1)..config.events_per_channel {
                within += overlap(paths[c][j], paths[c][j2]);
                wn += 1.0;
            }
            for c2 in (c + 1)..config.n_channels {
                across += overlap(paths[c][j], paths[c2][j]);
                an += 1.0;
            }
        }
    }
    (within / wn.max(1.0), across / an.max(1.0))
}

/// Extraction quality against the planted ground truth. Recall is over all
/// planted events, so withheld releases and planted ambiguities lower it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub planted: usize,
    pub extracted: usize,
    pub matched: usize,
    pub spurious: usize,
    pub missed: usize,
}

impl AuditReport {
    pub fn precision(&self) -> f64 {
        if self.extracted == 0 {
            0.0
        } else {
            self.matched as f64 / self.extracted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.planted == 0 {
            0.0
        } else {
            self.matched as f64 / self.planted as f64
        }
    }
}

pub fn ground_truth_audit(planted: &[PlantedEvent], extracted: &[PumpEvent]) -> AuditReport {
    let truth: BTreeSet<(&str, i64, &str)> = planted
        .iter()
        .map(|e| (e.channel_id.as_str(), e.pump_time, e.target_coin.as_str()))
        .collect();
    let mut matched = 0;
    let mut spurious = 0;
    for e in extracted {
        if truth.contains(&(e.channel_id.as_str(), e.pump_time, e.target_coin.as_str())) {
            matched += 1;
        } else {
            spurious += 1;
        }
    }
    AuditReport {
        planted: planted.len(),
        extracted: extracted.len(),
        matched,
        spurious,
        missed: planted.len() - matched,
    }
}

impl World {
    /// Labeled detector corpus: lifecycle templates vs chatter. Bare-symbol
    /// releases are excluded — they are only identifiable in context.
    pub fn labeled_docs(&self) -> Vec<(String, u8)> {
        self.messages
            .iter()
            .zip(&self.message_kinds)
            .filter_map(|(m, k)| match k {
                MessageKind::Lifecycle => Some((m.text.clone(), 1)),
                MessageKind::Chatter => Some((m.text.clone(), 0)),
                MessageKind::Release => None,
            })
            .collect()
    }

    /// Per-channel pumped-coin history, for embedding similarity studies.
    pub fn channel_histories(&self) -> Vec<(String, Vec<String>)> {
        let mut by_channel: BTreeMap<String, Vec<(i64, String)>> = BTreeMap::new();
        for e in &self.planted {
            by_channel
                .entry(e.channel_id.clone())
                .or_default()
                .push((e.pump_time, e.target_coin.clone()));
        }
        by_channel
            .into_iter()
            .map(|(c, mut v)| {
                v.sort();
                (c, v.into_iter().map(|(_, t)| t).collect())
            })
            .collect()
    }

    /// Writes all fixture files in the formats the pipeline stages consume.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("candles"))?;
        crate::corpus::write_messages_jsonl(&dir.join("messages.jsonl"), &self.messages)?;
        let mut labels = std::io::BufWriter::new(std::fs::File::create(dir.join("labels.csv"))?);
        writeln!(labels, "message_id,label")?;
        for (m, k) in self.messages.iter().zip(&self.message_kinds) {
            let label = match k {
                MessageKind::Lifecycle => "1",
                MessageKind::Chatter => "0",
                MessageKind::Release => continue,
            };
            writeln!(labels, "{},{}", m.message_id, label)?;
        }
        drop(labels);
        for coin in &self.coins {
            self.candles.dump_file(
                &dir.join("candles").join(format!("{coin}_{PAIRING}.csv")),
                coin,
                PAIRING,
            )?;
        }
        self.listings.save(&dir.join("listings.csv"))?;
        self.stats.save(&dir.join("coin_stats.csv"))?;
        let write_lexicon = |name: &str, entries: Vec<String>| -> Result<()> {
            std::fs::write(dir.join(name), entries.join("\n") + "\n")?;
            Ok(())
        };
        write_lexicon("exchanges.txt", vec![EXCHANGE.to_string()])?;
        write_lexicon("pairing_coins.txt", vec![PAIRING.to_string()])?;
        write_lexicon("listed_coins.txt", self.coins.clone())?;
        write_lexicon(
            "keywords.txt",
            PUMP_KEYWORDS.iter().map(|s| s.to_string()).collect(),
        )?;
        let mut planted =
            std::io::BufWriter::new(std::fs::File::create(dir.join("planted.jsonl"))?);
        for e in &self.planted {
            serde_json::to_writer(&mut planted, e)?;
            writeln!(planted)?;
        }
        drop(planted);
        let split = serde_json::json!({ "t1": self.t1, "t2": self.t2 });
        std::fs::write(dir.join("split.json"), serde_json::to_string_pretty(&split)?)?;
        Ok(())
    }
}
