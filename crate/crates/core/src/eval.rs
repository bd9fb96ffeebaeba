//! Ranking evaluation: AUC, per-event ranked lists, HR@k, and the
//! experiment harness comparing model variants.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::features::{DatasetSplit, IdMaps, Sample, CHANNEL_NUMERIC_FIELDS};
use crate::snn::{predict, train, EmbeddingMode, ModelConfig, ModelParams};

/// Rank-statistic AUC with ties counted 0.5, via average ranks. Equals the
/// brute-force pairwise probability P(score_pos > score_neg) + 0.5 P(tie).
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassData);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Average ranks over tied groups (1-based).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = n_pos as f64;
    let n = n_neg as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Per-event ranking of candidate coins by predicted pump probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedList {
    pub event_ref: String,
    /// (coin, score) sorted by score descending; ties broken by ascending
    /// coin symbol so rankings are deterministic.
    pub entries: Vec<(String, f64)>,
    /// 1-based rank of the ground-truth coin.
    pub positive_rank: usize,
}

impl RankedList {
    /// Builds a ranked list from scored candidates. Exactly one entry must
    /// carry the positive label.
    pub fn new(event_ref: String, mut scored: Vec<(String, f64, u8)>) -> Self {
        assert_eq!(
            scored.iter().filter(|e| e.2 == 1).count(),
            1,
            "ranked list requires exactly one positive entry"
        );
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| a.0.cmp(&b.0))
        });
        let positive_rank = scored.iter().position(|e| e.2 == 1).unwrap() + 1;
        RankedList {
            event_ref,
            entries: scored.into_iter().map(|(c, s, _)| (c, s)).collect(),
            positive_rank,
        }
    }
}

/// Fraction of lists whose ground-truth coin appears in the top k.
pub fn hit_ratio(lists: &[RankedList], k: usize) -> f64 {
    assert!(k >= 1);
    if lists.is_empty() {
        return 0.0;
    }
    let hits = lists.iter().filter(|l| l.positive_rank <= k).count();
    hits as f64 / lists.len() as f64
}

/// The HR@k cutoffs reported by the experiment harness.
pub const HR_CUTOFFS: [usize; 6] = [1, 3, 5, 10, 20, 30];

/// Deterministically thins negatives, keeping every positive. Used to cap
/// validation cost; test sets are always ranked in full.
pub fn thin_negatives(samples: &[Sample], keep: f64, seed: u64) -> Vec<Sample> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .filter(|s| s.label == 1 || rng.gen_bool(keep))
        .cloned()
        .collect()
}

/// Groups scored test samples into one ranked list per event.
pub fn ranked_lists(samples: &[Sample], scores: &[f64]) -> Vec<RankedList> {
    assert_eq!(samples.len(), scores.len());
    let mut by_event: BTreeMap<&str, Vec<(String, f64, u8)>> = BTreeMap::new();
    for (s, &score) in samples.iter().zip(scores) {
        by_event
            .entry(&s.event_ref)
            .or_default()
            .push((s.target_coin.clone(), score, s.label));
    }
    by_event
        .into_iter()
        .map(|(event_ref, scored)| RankedList::new(event_ref.to_string(), scored))
        .collect()
}

/// One model configuration to train and evaluate.
#[derive(Debug, Clone)]
pub struct ExperimentCell {
    pub name: String,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub name: String,
    pub seed: u64,
    pub auc: f64,
    /// HR@k aligned with HR_CUTOFFS.
    pub hr: Vec<f64>,
    pub best_epoch: usize,
    pub val_auc: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    /// Thin validation negatives to this fraction (the test set is never
    /// thinned).
    pub val_negative_keep: Option<f64>,
}

/// Trains and evaluates one configuration on a prepared split.
pub fn run_cell(
    cell: &ExperimentCell,
    split: &DatasetSplit,
    ids: &IdMaps,
    pretrained: Option<&EmbeddingTable>,
    options: &ExperimentOptions,
) -> Result<(CellResult, ModelParams)> {
    let first = split
        .train
        .first()
        .ok_or_else(|| Error::EmptySplit {
            which: "train".into(),
        })?;
    let mut params = ModelParams::init(
        cell.config.clone(),
        ids.channel_table_size(),
        ids.coin_table_size(),
        CHANNEL_NUMERIC_FIELDS,
        first.target_numeric.len(),
    )?;
    if cell.config.embedding_mode == EmbeddingMode::Pretrained {
        let table = pretrained.ok_or(Error::MissingInput(
            "pretrained embedding table required".into(),
        ))?;
        params.load_pretrained(table, ids)?;
    }
    params.norm = split.norm.clone();

    let val = match options.val_negative_keep {
        Some(keep) if keep < 1.0 => thin_negatives(&split.validation, keep, cell.config.seed),
        _ => split.validation.clone(),
    };
    let outcome = train(params, &split.train, &val)?;
    let (scores, _) = predict(&outcome.params, &split.test);
    let labels: Vec<u8> = split.test.iter().map(|s| s.label).collect();
    let test_auc = auc(&scores, &labels)?;
    let lists = ranked_lists(&split.test, &scores);
    let hr = HR_CUTOFFS.iter().map(|&k| hit_ratio(&lists, k)).collect();
    Ok((
        CellResult {
            name: cell.name.clone(),
            seed: cell.config.seed,
            auc: test_auc,
            hr,
            best_epoch: outcome.best_epoch,
            val_auc: outcome.best_val_auc,
        },
        outcome.params,
    ))
}

/// Trains every cell against the same split and returns the results table.
pub fn run_experiment(
    cells: &[ExperimentCell],
    split: &DatasetSplit,
    ids: &IdMaps,
    pretrained: Option<&EmbeddingTable>,
    options: &ExperimentOptions,
) -> Result<Vec<CellResult>> {
    cells
        .iter()
        .map(|cell| run_cell(cell, split, ids, pretrained, options).map(|(r, _)| r))
        .collect()
}

pub fn write_results_csv(path: &Path, results: &[CellResult]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(out, "name,seed,auc")?;
    for k in HR_CUTOFFS {
        write!(out, ",hr@{k}")?;
    }
    writeln!(out, ",best_epoch,val_auc")?;
    for r in results {
        write!(out, "{},{},{}", r.name, r.seed, r.auc)?;
        for h in &r.hr {
            write!(out, ",{h}")?;
        }
        writeln!(out, ",{},{}", r.best_epoch, r.val_auc)?;
    }
    Ok(())
}

/// Renders the results as a fixed-width text table.
pub fn render_table(results: &[CellResult]) -> String {
    let mut s = String::new();
    let name_w = results
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(5)
        .max(5);
    s.push_str(&format!("{:name_w$}  {:>6}", "model", "AUC"));
    for k in HR_CUTOFFS {
        s.push_str(&format!("  {:>6}", format!("HR@{k}")));
    }
    s.push('\n');
    for r in results {
        s.push_str(&format!("{:name_w$}  {:6.3}", r.name, r.auc));
        for h in &r.hr {
            s.push_str(&format!("  {h:6.3}"));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    /// O(P*N) pairwise AUC used as an independent oracle.
    fn auc_brute_force(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut count = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            if labels[i] != 1 {
                continue;
            }
            for (j, &sj) in scores.iter().enumerate() {
                if labels[j] != 0 {
                    continue;
                }
                count += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
        num / count
    }

    #[test]
    fn auc_simple_cases() {
        assert_eq!(auc(&[0.9, 0.1, 0.2], &[1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert!(matches!(
            auc(&[0.5, 0.6], &[1, 1]),
            Err(Error::SingleClassData)
        ));
    }

    #[test]
    fn auc_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(10..200);
            // Coarse grid so ties actually occur.
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.gen_range(0..20) as f64) / 20.0)
                .collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
            labels[0] = 1;
            labels[1] = 0;
            let fast = auc(&scores, &labels).unwrap();
            let brute = auc_brute_force(&scores, &labels);
            assert!((fast - brute).abs() < 1e-12, "fast {fast} brute {brute}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let scores: Vec<f64> = (0..100).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 3 == 0)).collect();
        let base = auc(&scores, &labels).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp()).collect();
        assert!((auc(&transformed, &labels).unwrap() - base).abs() < 1e-12);
    }

    fn list(ranked: &[(&str, f64, u8)]) -> RankedList {
        RankedList::new(
            "e".into(),
            ranked
                .iter()
                .map(|&(c, s, y)| (c.to_string(), s, y))
                .collect(),
        )
    }

    #[test]
    fn hit_ratio_rank_cutoffs() {
        let l = list(&[
            ("a", 0.9, 0),
            ("b", 0.8, 0),
            ("c", 0.7, 0),
            ("d", 0.6, 1),
            ("e", 0.5, 0),
        ]);
        assert_eq!(l.positive_rank, 4);
        let lists = vec![l];
        assert_eq!(hit_ratio(&lists, 3), 0.0);
        assert_eq!(hit_ratio(&lists, 5), 1.0);
        assert_eq!(hit_ratio(&lists, 100), 1.0);
    }

    #[test]
    fn hit_ratio_monotone_in_k() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let lists: Vec<RankedList> = (0..30)
            .map(|e| {
                let n = rng.gen_range(3..40);
                let pos = rng.gen_range(0..n);
                let scored: Vec<(String, f64, u8)> = (0..n)
                    .map(|i| {
                        (
                            format!("c{i}"),
                            rng.gen_range(0.0..1.0),
                            u8::from(i == pos),
                        )
                    })
                    .collect();
                RankedList::new(format!("e{e}"), scored)
            })
            .collect();
        let mut last = 0.0;
        for k in 1..50 {
            let hr = hit_ratio(&lists, k);
            assert!(hr >= last);
            last = hr;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let l = list(&[("b", 0.5, 0), ("a", 0.5, 0), ("c", 0.5, 1)]);
        let coins: Vec<&str> = l.entries.iter().map(|(c, _)| c.as_str()).collect();
        assert_eq!(coins, vec!["a", "b", "c"]);
        assert_eq!(l.positive_rank, 3);
    }
}
