//! Message ingestion, text normalization, keyword filtering, TF-IDF
//! vectorization, and offline invite-link snowball extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frozen English stop-word list shipped with the crate.
const STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// One channel post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub channel_id: String,
    pub message_id: u64,
    /// UTC seconds since epoch.
    pub timestamp: i64,
    pub text: String,
}

/// Cleaned, lowercased token stream of one message.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenizedDoc {
    pub tokens: Vec<String>,
}

/// Lexicon of coin symbols, exchange names, and pump keywords used by the
/// keyword filter. Entries are matched case-insensitively at token level.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeSet<String>,
}

impl Lexicon {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(entries: I) -> Self {
        Lexicon {
            entries: entries
                .into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
        }
    }

    /// Loads a newline-delimited UTF-8 lexicon file. Blank lines and lines
    /// starting with '#' are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut entries = BTreeSet::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                entries.insert(t.to_lowercase());
            }
        }
        Ok(Lexicon { entries })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend<I: IntoIterator<Item = S>, S: AsRef<str>>(&mut self, entries: I) {
        for e in entries {
            self.entries.insert(e.as_ref().to_lowercase());
        }
    }
}

fn stopword_set() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.lines().filter(|l| !l.is_empty()).collect())
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:[a-z][a-z0-9+.\-]*://|www\.|t\.me/)\S+").unwrap())
}

/// Splits text into lowercase alphanumeric tokens after stripping URLs.
/// Punctuation and emoji act as token separators and never survive.
fn raw_tokens(text: &str) -> Vec<String> {
    let stripped = url_regex().replace_all(text, " ");
    stripped
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Lowercases, strips URLs, punctuation, and emoji, and removes stop words.
/// Numeric tokens are retained so coin symbols survive.
/// True if the lowercased token is on the frozen stopword list.
pub fn is_stopword(token: &str) -> bool {
    stopword_set().contains(token.to_lowercase().as_str())
}

pub fn tokenize(text: &str) -> TokenizedDoc {
    let tokens = raw_tokens(text)
        .into_iter()
        .filter(|t| !stopword_set().contains(t.as_str()))
        .collect();
    TokenizedDoc { tokens }
}

/// Returns true iff any lexicon entry occurs in the message as a
/// case-insensitive token match; true means the message is reserved.
pub fn keyword_filter(msg: &Message, lexicon: &Lexicon) -> bool {
    raw_tokens(&msg.text).iter().any(|t| lexicon.contains(t))
}

/// Fitted TF-IDF vocabulary with dense lexicographic indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfidfVocabulary {
    term_to_index: BTreeMap<String, usize>,
    doc_freq: Vec<u32>,
    n_docs: usize,
}

impl TfidfVocabulary {
    pub fn len(&self) -> usize {
        self.term_to_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.term_to_index.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_to_index.get(term).copied()
    }

    pub fn doc_freq(&self, term: &str) -> Option<u32> {
        self.index_of(term).map(|i| self.doc_freq[i])
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, usize)> {
        self.term_to_index.iter().map(|(t, &i)| (t.as_str(), i))
    }

    /// Stable content hash used to pair serialized models with the
    /// vocabulary they were trained on.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (term, &idx) in &self.term_to_index {
            mix(term.as_bytes());
            mix(&idx.to_le_bytes());
            mix(&self.doc_freq[idx].to_le_bytes());
        }
        mix(&self.n_docs.to_le_bytes());
        h
    }
}

/// Sparse vector with strictly increasing indices and no zero entries.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, w)| w * dense.get(i).copied().unwrap_or(0.0))
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, w)| w * w)
            .sum::<f64>()
            .sqrt()
    }
}

/// Builds a vocabulary over terms with document frequency >= min_df.
pub fn fit_vocabulary(docs: &[TokenizedDoc], min_df: u32) -> Result<TfidfVocabulary> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let min_df = min_df.max(1);
    let mut df: HashMap<&str, u32> = HashMap::new();
    for doc in docs {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for t in &doc.tokens {
            seen.insert(t);
        }
        for t in seen {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut term_to_index = BTreeMap::new();
    let mut retained: Vec<(&str, u32)> = df
        .into_iter()
        .filter(|&(_, c)| c >= min_df)
        .collect();
    retained.sort_unstable_by(|a, b| a.0.cmp(b.0));
    let mut doc_freq = Vec::with_capacity(retained.len());
    for (idx, (term, count)) in retained.into_iter().enumerate() {
        term_to_index.insert(term.to_string(), idx);
        doc_freq.push(count);
    }
    Ok(TfidfVocabulary {
        term_to_index,
        doc_freq,
        n_docs: docs.len(),
    })
}

/// TF-IDF weights: tf = raw count / doc length, idf = ln((1+N)/(1+df)) + 1,
/// then L2 normalization. Out-of-vocabulary tokens are ignored.
pub fn tfidf_transform(doc: &TokenizedDoc, vocab: &TfidfVocabulary) -> SparseVector {
    if doc.tokens.is_empty() {
        return SparseVector::default();
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &doc.tokens {
        if let Some(idx) = vocab.index_of(t) {
            *counts.entry(idx).or_insert(0) += 1;
        }
    }
    let doc_len = doc.tokens.len() as f64;
    let n = vocab.n_docs as f64;
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(idx, c)| {
            let tf = c as f64 / doc_len;
            let idf = ((1.0 + n) / (1.0 + vocab.doc_freq[idx] as f64)).ln() + 1.0;
            (idx, tf * idf)
        })
        .filter(|&(_, w)| w != 0.0)
        .collect();
    let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    SparseVector { entries }
}

fn invite_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)t\.me/(?:joinchat/)?(\+?[A-Za-z0-9_\-]+)").unwrap()
    })
}

/// Extracts deduplicated t.me channel handles (including joinchat-style)
/// from message texts, for offline snowball expansion of the channel
/// frontier.
pub fn extract_invite_links(msgs: &[Message]) -> BTreeSet<String> {
    let mut handles = BTreeSet::new();
    for msg in msgs {
        for cap in invite_regex().captures_iter(&msg.text) {
            handles.insert(cap[1].to_string());
        }
    }
    handles
}

/// Reads messages from a JSON-Lines file, one object per line.
pub fn read_messages_jsonl(path: &Path) -> Result<Vec<Message>> {
    let file = std::fs::File::open(path)?;
    let mut msgs = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        msgs.push(serde_json::from_str(&line)?);
    }
    Ok(msgs)
}

/// Writes messages as JSON-Lines.
pub fn write_messages_jsonl(path: &Path, msgs: &[Message]) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for m in msgs {
        serde_json::to_writer(&mut out, m)?;
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(text: &str) -> Message {
        Message {
            channel_id: "c1".into(),
            message_id: 1,
            timestamp: 1,
            text: text.into(),
        }
    }

    #[test]
    fn tokenize_strips_urls_and_punctuation() {
        let doc = tokenize("Buy $FIC now!! https://t.me/x");
        assert_eq!(doc.tokens, vec!["buy", "fic", "now"]);
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").tokens.is_empty());
    }

    #[test]
    fn tokenize_removes_stop_words() {
        let doc = tokenize("The next message will be the coin name!");
        assert_eq!(doc.tokens, vec!["next", "message", "coin", "name"]);
    }

    #[test]
    fn tokenize_strips_emoji() {
        let doc = tokenize("pump 🚀🚀 soon");
        assert_eq!(doc.tokens, vec!["pump", "soon"]);
    }

    #[test]
    fn tokenize_keeps_numeric_tokens() {
        let doc = tokenize("target 2x on FIC");
        assert_eq!(doc.tokens, vec!["target", "2x", "fic"]);
    }

    #[test]
    fn tokenize_idempotent() {
        let texts = [
            "Buy $FIC now!! https://t.me/x",
            "The next message will be the coin name!",
            "hold 💎 your coins, target 2x www.example.com/page",
        ];
        for text in texts {
            let once = tokenize(text);
            let twice = tokenize(&once.tokens.join(" "));
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn keyword_filter_matches_tokens() {
        let lex = Lexicon::new(["pump", "target", "hold", "sell", "binance", "fic"]);
        assert!(keyword_filter(&msg("big PUMP tonight on binance"), &lex));
        assert!(!keyword_filter(&msg("good morning everyone"), &lex));
        assert!(keyword_filter(&msg("hold your coins, target 2x"), &lex));
    }

    #[test]
    fn keyword_filter_monotone_in_lexicon() {
        let small = Lexicon::new(["pump"]);
        let mut large = small.clone();
        large.extend(["sell", "btc"]);
        let messages = ["pump now", "nothing here", "sell btc"];
        for text in messages {
            let m = msg(text);
            if keyword_filter(&m, &small) {
                assert!(keyword_filter(&m, &large));
            }
        }
    }

    fn docs(raw: &[&[&str]]) -> Vec<TokenizedDoc> {
        raw.iter()
            .map(|d| TokenizedDoc {
                tokens: d.iter().map(|s| s.to_string()).collect(),
            })
            .collect()
    }

    #[test]
    fn fit_vocabulary_counts() {
        let d = docs(&[&["pump", "coin"], &["sell", "coin"]]);
        let v = fit_vocabulary(&d, 1).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.index_of("coin"), Some(0));
        assert_eq!(v.index_of("pump"), Some(1));
        assert_eq!(v.index_of("sell"), Some(2));
        assert_eq!(v.doc_freq("coin"), Some(2));
        assert_eq!(v.doc_freq("pump"), Some(1));
        assert_eq!(v.n_docs(), 2);
    }

    #[test]
    fn fit_vocabulary_min_df() {
        let d = docs(&[&["pump", "coin"], &["sell", "coin"]]);
        let v = fit_vocabulary(&d, 2).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.index_of("coin"), Some(0));
    }

    #[test]
    fn fit_vocabulary_empty_corpus() {
        assert!(matches!(fit_vocabulary(&[], 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn fit_vocabulary_matches_brute_force_recount() {
        // Independent hash-map recount over a synthetic corpus.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let words: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let corpus: Vec<TokenizedDoc> = (0..1000)
            .map(|_| {
                let len = rng.gen_range(1..12);
                TokenizedDoc {
                    tokens: (0..len)
                        .map(|_| words[rng.gen_range(0..words.len())].clone())
                        .collect(),
                }
            })
            .collect();
        let vocab = fit_vocabulary(&corpus, 1).unwrap();

        let mut brute: HashMap<String, u32> = HashMap::new();
        for doc in &corpus {
            let uniq: BTreeSet<&String> = doc.tokens.iter().collect();
            for t in uniq {
                *brute.entry(t.clone()).or_insert(0) += 1;
            }
        }
        assert_eq!(vocab.len(), brute.len());
        for (term, df) in &brute {
            assert_eq!(vocab.doc_freq(term), Some(*df));
        }
    }

    #[test]
    fn tfidf_hand_computed_weights() {
        let d = docs(&[&["pump", "coin"], &["sell", "coin"]]);
        let v = fit_vocabulary(&d, 1).unwrap();
        let doc = TokenizedDoc {
            tokens: vec!["pump".into(), "coin".into()],
        };
        let sv = tfidf_transform(&doc, &v);
        // tf = 0.5 each; idf(coin) = ln(3/3)+1 = 1, idf(pump) = ln(3/2)+1.
        let w_coin = 0.5 * 1.0;
        let w_pump = 0.5 * ((3.0f64 / 2.0).ln() + 1.0);
        let norm = (w_coin * w_coin + w_pump * w_pump).sqrt();
        assert_eq!(sv.entries.len(), 2);
        assert!((sv.entries[0].1 - w_coin / norm).abs() < 1e-12);
        assert!((sv.entries[1].1 - w_pump / norm).abs() < 1e-12);
    }

    #[test]
    fn tfidf_all_oov_is_empty() {
        let d = docs(&[&["pump", "coin"]]);
        let v = fit_vocabulary(&d, 1).unwrap();
        let doc = TokenizedDoc {
            tokens: vec!["zzz".into()],
        };
        assert!(tfidf_transform(&doc, &v).entries.is_empty());
    }

    #[test]
    fn tfidf_unit_norm_or_empty() {
        let d = docs(&[&["pump", "coin"], &["sell", "coin"], &["pump", "hold"]]);
        let v = fit_vocabulary(&d, 1).unwrap();
        for doc in &d {
            let sv = tfidf_transform(doc, &v);
            if !sv.entries.is_empty() {
                assert!((sv.l2_norm() - 1.0).abs() < 1e-12);
                // Strictly increasing indices within the vocabulary.
                for pair in sv.entries.windows(2) {
                    assert!(pair[0].0 < pair[1].0);
                }
                for &(i, _) in &sv.entries {
                    assert!(i < v.len());
                }
            }
        }
    }

    #[test]
    fn invite_link_extraction() {
        let msgs = vec![
            msg("join https://t.me/pumpers"),
            msg("also t.me/joinchat/AbC_123 and t.me/pumpers again"),
            msg("nothing to see"),
        ];
        let handles = extract_invite_links(&msgs);
        assert_eq!(
            handles.into_iter().collect::<Vec<_>>(),
            vec!["AbC_123".to_string(), "pumpers".to_string()]
        );
        assert!(extract_invite_links(&[]).is_empty());
    }

    #[test]
    fn messages_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("msgs.jsonl");
        let msgs = vec![
            Message {
                channel_id: "a".into(),
                message_id: 1,
                timestamp: 100,
                text: "pump soon".into(),
            },
            Message {
                channel_id: "b".into(),
                message_id: 2,
                timestamp: 200,
                text: "FIC".into(),
            },
        ];
        write_messages_jsonl(&path, &msgs).unwrap();
        assert_eq!(read_messages_jsonl(&path).unwrap(), msgs);
    }
}
