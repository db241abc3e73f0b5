use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::tkg::{Dataset, TemporalKG, UNKNOWN_TIME};

/// Dataset sizes, reverse relations excluded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities1: usize,
    pub entities2: usize,
    pub relations1: usize,
    pub relations2: usize,
    /// Distinct time ids in use; τ0 counts only when some fact carries it.
    pub times: usize,
    pub quads1: usize,
    pub quads2: usize,
    /// Reference alignment pairs, train and test.
    pub pairs: usize,
    /// Training seed pairs.
    pub seeds: usize,
}

fn uses_unknown(kg: &TemporalKG) -> bool {
    kg.quadruples()
        .iter()
        .any(|q| q.interval.begin == UNKNOWN_TIME || q.interval.end == UNKNOWN_TIME)
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let unknown = uses_unknown(&ds.g1) || uses_unknown(&ds.g2);
    DatasetStats {
        entities1: ds.g1.num_entities(),
        entities2: ds.g2.num_entities(),
        relations1: ds.g1.num_relations(),
        relations2: ds.g2.num_relations(),
        times: ds.times.num_real() + usize::from(unknown),
        quads1: ds.g1.quadruples().len(),
        quads2: ds.g2.quadruples().len(),
        pairs: ds.seeds.num_reference(),
        seeds: ds.seeds.train.len(),
    }
}

/// Trainable scalars without self-loops:
/// `k(|E1|+|E2|+2|R1|+2|R2|+|T*|) + 6kL`.
pub fn param_count(stats: &DatasetStats, k: usize, layers: usize) -> u64 {
    let rows = stats.entities1 + stats.entities2 + 2 * stats.relations1 + 2 * stats.relations2 + stats.times;
    (k * rows + 6 * k * layers) as u64
}

/// Extra scalars when self-loops are on: the self relation, plus the τ0
/// row if no fact uses τ0 already.
pub fn self_loop_delta(stats: &DatasetStats, num_real_times: usize, k: usize) -> u64 {
    let needs_unknown = stats.times == num_real_times;
    (k * (1 + usize::from(needs_unknown))) as u64
}

pub const STATS_HEADER: [&str; 10] = ["Dataset", "|E1|", "|E2|", "|R1|", "|R2|", "|T*|", "|Q1|", "|Q2|", "|P|", "|S|"];

/// Tab-separated table with a header row and one data row, optionally
/// followed by an `overlap` line.
pub fn format_stats(name: &str, s: &DatasetStats, overlap: Option<f64>) -> String {
    let mut out = STATS_HEADER.join("\t");
    out.push('\n');
    let _ = writeln!(
        out,
        "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        s.entities1, s.entities2, s.relations1, s.relations2, s.times, s.quads1, s.quads2, s.pairs, s.seeds
    );
    if let Some(o) = overlap {
        let _ = writeln!(out, "overlap\t{o:.4}");
    }
    out
}
