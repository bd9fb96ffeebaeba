//! Session aggregation, pump-and-dump quintuple extraction, and merging of
//! multi-channel pumps of the same coin.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Lexicon, Message};
use crate::error::{Error, Result};

/// Maximum gap between adjacent messages of one session.
pub const SESSION_GAP_SECS: i64 = 24 * 3600;

/// Default window for merging the same pump announced in several channels.
pub const MERGE_WINDOW_SECS: i64 = 3600;

/// A channel's maximal run of messages with adjacent gaps under 24 hours.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub channel_id: String,
    pub messages: Vec<Message>,
    pub start: i64,
    pub end: i64,
}

/// The quintuple describing one pump-and-dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PumpEvent {
    pub channel_id: String,
    /// UTC seconds of the coin-release message.
    pub pump_time: i64,
    pub exchange: String,
    pub pairing_coin: String,
    pub target_coin: String,
}

/// The same pump coordinated across several channels, collapsed to one
/// event at the earliest announce time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedEvent {
    pub pump_time: i64,
    pub channels: Vec<String>,
    pub exchange: String,
    pub pairing_coin: String,
    pub target_coin: String,
}

/// Greedy left-to-right grouping of each channel's messages with the
/// 24h-gap rule. Output is ordered by (channel_id, start time).
pub fn sessionize(msgs: &[Message]) -> Vec<Session> {
    let mut by_channel: BTreeMap<&str, Vec<&Message>> = BTreeMap::new();
    for m in msgs {
        by_channel.entry(&m.channel_id).or_default().push(m);
    }
    let mut sessions = Vec::new();
    for (channel_id, mut channel_msgs) in by_channel {
        channel_msgs.sort_by_key(|m| (m.timestamp, m.message_id));
        let mut current: Vec<Message> = Vec::new();
        for m in channel_msgs {
            if let Some(last) = current.last() {
                if m.timestamp - last.timestamp >= SESSION_GAP_SECS {
                    sessions.push(make_session(channel_id, std::mem::take(&mut current)));
                }
            }
            current.push(m.clone());
        }
        if !current.is_empty() {
            sessions.push(make_session(channel_id, current));
        }
    }
    sessions
}

fn make_session(channel_id: &str, messages: Vec<Message>) -> Session {
    let start = messages.first().unwrap().timestamp;
    let end = messages.last().unwrap().timestamp;
    Session {
        channel_id: channel_id.to_string(),
        messages,
        start,
        end,
    }
}

/// Lexicons used to parse the quintuple out of a session.
#[derive(Debug, Clone, Default)]
pub struct EventLexicons {
    pub exchanges: Lexicon,
    pub pairing_coins: Lexicon,
    /// Symbols listed on the target exchange; a coin-release message is a
    /// single-token message matching this lexicon.
    pub listed_coins: Lexicon,
}

/// Default flagging for extraction when no trained detector is supplied:
/// a message is flagged if it carries a pump keyword, or if its cleaned
/// text is a bare listed-coin symbol (the release pattern; extract_event
/// still requires a preceding flagged message before treating it as one).
pub fn session_flags(session: &Session, keywords: &Lexicon, listed: &Lexicon) -> Vec<bool> {
    session
        .messages
        .iter()
        .map(|m| {
            if crate::corpus::keyword_filter(m, keywords) {
                return true;
            }
            let doc = tokenize(&m.text);
            doc.tokens.len() == 1 && listed.contains(&doc.tokens[0])
        })
        .collect()
}

/// Extracts at most one PumpEvent from a session. `pump_flags` holds the
/// per-message classifier outputs, aligned with `session.messages`.
///
/// A coin release is a flagged message whose cleaned text is a single token
/// matching the listed-coin lexicon, posted after at least one earlier
/// flagged message (the countdown/announcement). Exchange and pairing coin
/// are parsed from the flagged announcement texts by lexicon match. Two
/// distinct qualifying targets make the session ambiguous.
pub fn extract_event(
    session: &Session,
    pump_flags: &[bool],
    lex: &EventLexicons,
) -> Result<Option<PumpEvent>> {
    assert_eq!(session.messages.len(), pump_flags.len());
    let mut exchange: Option<String> = None;
    let mut pairing: Option<String> = None;
    let mut targets: Vec<(String, i64)> = Vec::new();
    let mut seen_flagged = false;
    for (msg, &flag) in session.messages.iter().zip(pump_flags) {
        if !flag {
            continue;
        }
        let doc = tokenize(&msg.text);
        if doc.tokens.len() == 1 && lex.listed_coins.contains(&doc.tokens[0]) && seen_flagged {
            let symbol = doc.tokens[0].to_uppercase();
            if pairing.as_deref() != Some(symbol.as_str())
                && !targets.iter().any(|(t, _)| *t == symbol)
            {
                targets.push((symbol, msg.timestamp));
            }
            seen_flagged = true;
            continue;
        }
        for token in &doc.tokens {
            if exchange.is_none() && lex.exchanges.contains(token) {
                exchange = Some(token.clone());
            }
            if pairing.is_none() && lex.pairing_coins.contains(token) {
                pairing = Some(token.to_uppercase());
            }
        }
        seen_flagged = true;
    }
    match (targets.len(), exchange, pairing) {
        (0, _, _) => Ok(None),
        (1, Some(exchange), Some(pairing_coin)) => {
            let (target_coin, pump_time) = targets.pop().unwrap();
            if target_coin == pairing_coin {
                return Ok(None);
            }
            Ok(Some(PumpEvent {
                channel_id: session.channel_id.clone(),
                pump_time,
                exchange,
                pairing_coin,
                target_coin,
            }))
        }
        (1, _, _) => Ok(None),
        _ => Err(Error::AmbiguousEvent {
            channel_id: session.channel_id.clone(),
            candidates: targets.into_iter().map(|(t, _)| t).collect(),
        }),
    }
}

/// Runs extraction over many sessions, partitioning the ambiguous ones for
/// manual review.
pub fn extract_events(
    sessions: &[Session],
    flags: &[Vec<bool>],
    lex: &EventLexicons,
) -> (Vec<PumpEvent>, Vec<Session>) {
    let mut events = Vec::new();
    let mut ambiguous = Vec::new();
    for (session, session_flags) in sessions.iter().zip(flags) {
        match extract_event(session, session_flags, lex) {
            Ok(Some(e)) => events.push(e),
            Ok(None) => {}
            Err(Error::AmbiguousEvent { .. }) => ambiguous.push(session.clone()),
            Err(_) => unreachable!("extract_event only raises AmbiguousEvent"),
        }
    }
    (events, ambiguous)
}

/// Merges events with the same (exchange, pairing, target) whose pump times
/// fall within `window_secs` of the cluster's earliest event.
pub fn merge_events(events: &[PumpEvent], window_secs: i64) -> Vec<MergedEvent> {
    let mut by_key: BTreeMap<(String, String, String), Vec<&PumpEvent>> = BTreeMap::new();
    for e in events {
        by_key
            .entry((
                e.exchange.clone(),
                e.pairing_coin.clone(),
                e.target_coin.clone(),
            ))
            .or_default()
            .push(e);
    }
    let mut merged = Vec::new();
    for ((exchange, pairing_coin, target_coin), mut group) in by_key {
        group.sort_by_key(|e| (e.pump_time, e.channel_id.clone()));
        let mut cluster: Vec<&PumpEvent> = Vec::new();
        for e in group {
            if let Some(first) = cluster.first() {
                if e.pump_time - first.pump_time > window_secs {
                    merged.push(finish_cluster(
                        std::mem::take(&mut cluster),
                        &exchange,
                        &pairing_coin,
                        &target_coin,
                    ));
                }
            }
            cluster.push(e);
        }
        if !cluster.is_empty() {
            merged.push(finish_cluster(cluster, &exchange, &pairing_coin, &target_coin));
        }
    }
    merged.sort_by_key(|e| (e.pump_time, e.target_coin.clone()));
    merged
}

fn finish_cluster(
    cluster: Vec<&PumpEvent>,
    exchange: &str,
    pairing_coin: &str,
    target_coin: &str,
) -> MergedEvent {
    let pump_time = cluster.iter().map(|e| e.pump_time).min().unwrap();
    let mut channels: Vec<String> = cluster.iter().map(|e| e.channel_id.clone()).collect();
    channels.sort();
    channels.dedup();
    MergedEvent {
        pump_time,
        channels,
        exchange: exchange.to_string(),
        pairing_coin: pairing_coin.to_string(),
        target_coin: target_coin.to_string(),
    }
}

pub fn write_events_jsonl(path: &Path, events: &[PumpEvent]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_events_jsonl(path: &Path) -> Result<Vec<PumpEvent>> {
    let file = std::fs::File::open(path)?;
    let mut events = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(&line)?);
        }
    }
    Ok(events)
}

pub fn write_merged_jsonl(path: &Path, events: &[MergedEvent]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_merged_jsonl(path: &Path) -> Result<Vec<MergedEvent>> {
    let file = std::fs::File::open(path)?;
    let mut events = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(&line)?);
        }
    }
    Ok(events)
}
