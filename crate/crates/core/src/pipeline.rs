//! Glue between the pipeline stages: message flagging, event extraction,
//! and dataset assembly. Used by the CLI and the end-to-end tests.

use crate::corpus::{Lexicon, Message};
use crate::error::Result;
use crate::events::{
    extract_events, merge_events, session_flags, sessionize, EventLexicons, MergedEvent,
    PumpEvent, Session, MERGE_WINDOW_SECS,
};
use crate::features::{
    normalize, temporal_split, DatasetSplit, ExclusionList, IdMaps, SampleBuilder,
};
use crate::synth::World;

/// Sessionizes, flags (keyword + bare-symbol rule), extracts, and merges.
pub fn events_from_messages(
    msgs: &[Message],
    keywords: &Lexicon,
    lexicons: &EventLexicons,
) -> (Vec<PumpEvent>, Vec<MergedEvent>, Vec<Session>) {
    let sessions = sessionize(msgs);
    let flags: Vec<Vec<bool>> = sessions
        .iter()
        .map(|s| session_flags(s, keywords, &lexicons.listed_coins))
        .collect();
    let (events, review) = extract_events(&sessions, &flags, lexicons);
    let merged = merge_events(&events, MERGE_WINDOW_SECS);
    (events, merged, review)
}

/// Runs the full feature pipeline on a synthetic world: extraction, id
/// assignment over all listed coins, sample building, temporal split at
/// the world's markers, and train-fitted normalization.
pub fn split_from_world(world: &World, max_seq_len: usize) -> Result<(DatasetSplit, IdMaps)> {
    let (_, merged, _) = events_from_messages(&world.messages, &world.keywords, &world.lexicons);
    let channels: Vec<&str> = merged
        .iter()
        .flat_map(|e| e.channels.iter().map(|c| c.as_str()))
        .collect();
    let ids = IdMaps::build(
        world.coins.iter().map(|c| c.as_str()),
        channels.into_iter(),
    );
    let exclusions = ExclusionList::default();
    let builder = SampleBuilder {
        candles: &world.candles,
        stats: &world.stats,
        listings: &world.listings,
        ids: &ids,
        exclusions: &exclusions,
        max_seq_len,
    };
    let samples = builder.build_all(&merged)?;
    let split = normalize(temporal_split(samples, world.t1, world.t2)?)?;
    Ok((split, ids))
}
