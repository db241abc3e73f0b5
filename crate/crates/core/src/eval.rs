//! Alignment ranking: L1 and CSLS similarity, MRR and Hits@N, and the
//! split of test pairs by time sensitivity.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FinalRepresentations;
use crate::numerics::{DenseMatrix, Real};
use crate::tkg::{EntityId, NeighborhoodIndex, UNKNOWN_TIME};

/// Default CSLS neighbourhood size.
pub const DEFAULT_K_CSLS: usize = 10;

/// Default time-sensitivity threshold for the highly/lowly split.
pub const DEFAULT_SENSITIVITY_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricSpace {
    L1,
    #[default]
    Csls,
}

impl MetricSpace {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricSpace::L1 => "l1",
            MetricSpace::Csls => "csls",
        }
    }
}

/// Base similarity underneath CSLS.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseSimilarity {
    #[default]
    L1,
    Cosine,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    SourceToTarget,
    TargetToSource,
    /// Both directions, ranks pooled.
    Both,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::SourceToTarget => "source-to-target",
            Direction::TargetToSource => "target-to-source",
            Direction::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    #[default]
    All,
    Highly,
    Lowly,
}

impl Partition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Partition::All => "all",
            Partition::Highly => "highly",
            Partition::Lowly => "lowly",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    /// One-based rank of the gold target, per evaluated pair.
    pub ranks: Vec<usize>,
    pub partition: Partition,
    pub space: MetricSpace,
    pub direction: Direction,
}

impl RankingReport {
    fn from_ranks(ranks: Vec<usize>) -> Self {
        let n = ranks.len().max(1) as f64;
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        let hits = |cut: usize| ranks.iter().filter(|&&r| r <= cut).count() as f64 / n;
        Self {
            mrr,
            hits1: hits(1),
            hits10: hits(10),
            ranks,
            partition: Partition::All,
            space: MetricSpace::L1,
            direction: Direction::SourceToTarget,
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.ranks.len()
    }

    /// Flattens to report rows, one per metric.
    pub fn rows(&self, seed: u64, runtime_seconds: f64) -> Vec<ReportRow> {
        [("mrr", self.mrr), ("hits1", self.hits1), ("hits10", self.hits10)]
            .into_iter()
            .map(|(metric, value)| ReportRow {
                metric: metric.to_string(),
                value,
                partition: self.partition,
                space: self.space,
                direction: self.direction,
                seed,
                runtime_seconds,
            })
            .collect()
    }
}

/// One line of an evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub value: f64,
    pub partition: Partition,
    pub space: MetricSpace,
    pub direction: Direction,
    pub seed: u64,
    pub runtime_seconds: f64,
}

pub const REPORT_CSV_HEADER: &str = "metric,value,partition,space,direction,seed,runtime_seconds";

pub fn write_report_csv(rows: &[ReportRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.metric,
            r.value,
            r.partition.as_str(),
            r.space.as_str(),
            r.direction.as_str(),
            r.seed,
            r.runtime_seconds
        )?;
    }
    Ok(())
}

pub fn write_report_files(rows: &[ReportRow], json: &Path, csv: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(rows).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(json, text + "\n").map_err(|e| Error::io(json, e))?;
    let mut buf = Vec::new();
    write_report_csv(rows, &mut buf).map_err(|e| Error::io(csv, e))?;
    std::fs::write(csv, buf).map_err(|e| Error::io(csv, e))
}

fn check_widths<T: Real>(src: &DenseMatrix<T>, tgt: &DenseMatrix<T>) -> Result<()> {
    if src.cols() != tgt.cols() {
        return Err(Error::DimensionMismatch {
            expected: src.cols(),
            got: tgt.cols(),
        });
    }
    Ok(())
}

/// `sim[i][j] = −‖src_i − tgt_j‖₁`.
pub fn similarity_matrix<T: Real>(src: &DenseMatrix<T>, tgt: &DenseMatrix<T>) -> Result<DenseMatrix<f64>> {
    check_widths(src, tgt)?;
    let cols = tgt.rows();
    let mut out = DenseMatrix::zeros(src.rows(), cols);
    if cols == 0 {
        return Ok(out);
    }
    out.as_mut_slice().par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        let a = src.row(i);
        for (j, s) in row.iter_mut().enumerate() {
            let mut d = 0.0;
            for (&x, &y) in a.iter().zip(tgt.row(j)) {
                d += (x - y).abs().as_f64();
            }
            *s = -d;
        }
    });
    Ok(out)
}

/// Cosine similarity, offered as an alternative CSLS base.
pub fn cosine_matrix<T: Real>(src: &DenseMatrix<T>, tgt: &DenseMatrix<T>) -> Result<DenseMatrix<f64>> {
    check_widths(src, tgt)?;
    let unit = |m: &DenseMatrix<T>| -> Vec<Vec<f64>> {
        (0..m.rows())
            .map(|i| {
                let r: Vec<f64> = m.row(i).iter().map(|v| v.as_f64()).collect();
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                r.into_iter().map(|v| v / n).collect()
            })
            .collect()
    };
    let (a, b) = (unit(src), unit(tgt));
    let cols = b.len();
    let mut out = DenseMatrix::zeros(a.len(), cols);
    if cols == 0 {
        return Ok(out);
    }
    out.as_mut_slice().par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        for (j, s) in row.iter_mut().enumerate() {
            *s = a[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum();
        }
    });
    Ok(out)
}

/// Mean of the `k` largest values, summed in descending order.
fn top_k_mean(values: &mut [f64], k: usize) -> f64 {
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if k < values.len() {
        values.select_nth_unstable_by(k - 1, desc);
    }
    let top = &mut values[..k];
    top.sort_unstable_by(desc);
    top.iter().sum::<f64>() / k as f64
}

/// `csls[i][j] = 2·sim[i][j] − r_src(i) − r_tgt(j)` where `r_src(i)` is the
/// mean of row `i`'s `k` largest entries and `r_tgt(j)` that of column `j`.
pub fn csls_adjust(sim: &DenseMatrix<f64>, k: usize) -> Result<DenseMatrix<f64>> {
    let (rows, cols) = (sim.rows(), sim.cols());
    if k == 0 || k > rows.min(cols) {
        return Err(Error::Config(format!("k_csls = {k} must lie in 1..={}", rows.min(cols))));
    }
    let r_src: Vec<f64> = (0..rows).into_par_iter().map(|i| top_k_mean(&mut sim.row(i).to_vec(), k)).collect();
    let t = sim.transpose();
    let r_tgt: Vec<f64> = (0..cols).into_par_iter().map(|j| top_k_mean(&mut t.row(j).to_vec(), k)).collect();
    let mut out = sim.clone();
    for i in 0..rows {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = 2.0 * *v - r_src[i] - r_tgt[j];
        }
    }
    Ok(out)
}

/// Ranks `gold[i]` within row `i`. Candidates tied with the gold count
/// against it.
pub fn compute_metrics(matrix: &DenseMatrix<f64>, gold: &[usize]) -> Result<RankingReport> {
    if gold.len() != matrix.rows() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            got: gold.len(),
        });
    }
    let mut ranks = Vec::with_capacity(gold.len());
    for (i, &g) in gold.iter().enumerate() {
        if g >= matrix.cols() {
            return Err(Error::Config(format!("gold column {g} of row {i} outside {} candidates", matrix.cols())));
        }
        let row = matrix.row(i);
        let score = row[g];
        let better = row.iter().enumerate().filter(|&(j, &s)| j != g && s >= score).count();
        ranks.push(better + 1);
    }
    Ok(RankingReport::from_ranks(ranks))
}

/// Scores `pairs` (merged ids) with the test targets as candidate pool.
pub fn rank_pairs<T: Real>(
    reps: &FinalRepresentations<T>,
    pairs: &[(EntityId, EntityId)],
    space: MetricSpace,
    base: BaseSimilarity,
    k_csls: usize,
    direction: Direction,
) -> Result<RankingReport> {
    if pairs.is_empty() {
        return Err(Error::Config("no pairs to evaluate".into()));
    }
    let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let (a, b) = (reps.select(&left), reps.select(&right));
    let gold: Vec<usize> = (0..pairs.len()).collect();
    let one_way = |src: &DenseMatrix<T>, tgt: &DenseMatrix<T>| -> Result<Vec<usize>> {
        let sim = match base {
            BaseSimilarity::L1 => similarity_matrix(src, tgt)?,
            BaseSimilarity::Cosine => cosine_matrix(src, tgt)?,
        };
        let scored = match space {
            MetricSpace::L1 => sim,
            MetricSpace::Csls => csls_adjust(&sim, k_csls.min(pairs.len()))?,
        };
        Ok(compute_metrics(&scored, &gold)?.ranks)
    };
    let ranks = match direction {
        Direction::SourceToTarget => one_way(&a, &b)?,
        Direction::TargetToSource => one_way(&b, &a)?,
        Direction::Both => {
            let mut r = one_way(&a, &b)?;
            r.extend(one_way(&b, &a)?);
            r
        }
    };
    let mut report = RankingReport::from_ranks(ranks);
    report.space = space;
    report.direction = direction;
    Ok(report)
}

/// Re-ranks only the pairs at `subset` positions, keeping the full test
/// pool as candidates.
pub fn subset_report(full: &RankingReport, subset: &[usize], partition: Partition) -> RankingReport {
    let per_direction = match full.direction {
        Direction::Both => full.ranks.len() / 2,
        _ => full.ranks.len(),
    };
    let mut ranks: Vec<usize> = subset.iter().map(|&p| full.ranks[p]).collect();
    if full.direction == Direction::Both {
        ranks.extend(subset.iter().map(|&p| full.ranks[per_direction + p]));
    }
    let mut report = RankingReport::from_ranks(ranks);
    report.space = full.space;
    report.direction = full.direction;
    report.partition = partition;
    report
}

/// Fraction of an entity's links that carry a known timestamp. Self-loops
/// are ignored; an entity without links has sensitivity 0.
pub fn time_sensitivity(entity: EntityId, index: &NeighborhoodIndex) -> f64 {
    let mut total = 0usize;
    let mut unknown = 0usize;
    for l in index.graph_links(entity) {
        total += 1;
        if l.time == UNKNOWN_TIME {
            unknown += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        1.0 - unknown as f64 / total as f64
    }
}

/// Splits pair positions into highly (both sides at or above `threshold`)
/// and lowly time-sensitive.
pub fn partition_test_pairs(
    pairs: &[(EntityId, EntityId)],
    index: &NeighborhoodIndex,
    threshold: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut highly = Vec::new();
    let mut lowly = Vec::new();
    for (p, &(a, b)) in pairs.iter().enumerate() {
        if time_sensitivity(a, index) >= threshold && time_sensitivity(b, index) >= threshold {
            highly.push(p);
        } else {
            lowly.push(p);
        }
    }
    (highly, lowly)
}
