//! Dataset construction: overlap-controlled splits, synthetic graph pairs
//! with planted time-ambiguous twins, statistics and parameter counts.

mod split;
mod stats;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use split::{measure_overlap, overlap_counts, split_overlap, OverlapSplit};
pub use stats::{dataset_stats, format_stats, param_count, self_loop_delta, DatasetStats, STATS_HEADER};

use crate::error::{Error, Result};
use crate::tkg::{
    unify_time_sets, write_dataset, Dataset, EntityId, Quadruple, SeedAlignments, TemporalKG, TimeId, TimeIndex,
    TimeInterval, UNKNOWN_LABEL, UNKNOWN_TIME,
};

/// Parameters of a synthetic graph pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForgeSpec {
    /// Entities per graph, planted twins included.
    pub entities: usize,
    pub relations: usize,
    /// Number of real timestamps.
    pub time_steps: usize,
    /// Average number of random facts an entity takes part in.
    pub quads_per_entity: usize,
    /// Planted twin pairs; each yields two test pairs.
    pub planted: usize,
    pub seed_count: usize,
    pub overlap_ratio: f64,
    /// Approximate share of random facts without a timestamp. They are the
    /// facts touching a set of static entities.
    pub non_temporal_ratio: f64,
    /// Neighbours every twin links to.
    pub twin_neighbors: usize,
    /// Width of each twin's timestamp window.
    pub twin_window: usize,
    /// Put the twins' neighbours into the training seeds.
    pub anchor_twins: bool,
    pub seed: u64,
}

impl Default for ForgeSpec {
    fn default() -> Self {
        Self {
            entities: 60,
            relations: 6,
            time_steps: 40,
            quads_per_entity: 8,
            planted: 0,
            seed_count: 20,
            overlap_ratio: 0.5,
            non_temporal_ratio: 0.0,
            twin_neighbors: 3,
            twin_window: 2,
            anchor_twins: true,
            seed: 0,
        }
    }
}

impl ForgeSpec {
    fn base_entities(&self) -> usize {
        self.entities.saturating_sub(2 * self.planted)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Infeasible(m));
        let base = self.base_entities();
        if !(0.0..=1.0).contains(&self.overlap_ratio) || !(0.0..=1.0).contains(&self.non_temporal_ratio) {
            return fail("ratios must lie in [0, 1]".into());
        }
        if self.relations == 0 || self.time_steps == 0 || self.quads_per_entity == 0 {
            return fail("relations, time steps and quadruples per entity must be positive".into());
        }
        if base < 2 || self.entities < 2 * self.planted + 2 {
            return fail(format!("{} entities cannot hold {} planted pairs", self.entities, self.planted));
        }
        if self.planted > 0 {
            if self.twin_neighbors < 2 || base < self.twin_neighbors {
                return fail(format!("twins need at least 2 of the {base} base entities as neighbours"));
            }
            if self.relations < 2 {
                return fail("twins need at least 2 relations".into());
            }
            if self.twin_window == 0 || self.time_steps < 2 * self.twin_window {
                return fail(format!(
                    "{} time steps cannot hold two disjoint windows of width {}",
                    self.time_steps, self.twin_window
                ));
            }
            if self.anchor_twins && self.seed_count < self.twin_neighbors * self.planted {
                return fail("seed count too small to anchor the twins' neighbours".into());
            }
        }
        if self.seed_count > base {
            return fail(format!("{} seeds requested but only {base} alignable non-planted entities", self.seed_count));
        }
        let capacity = base * (base - 1) * self.relations * self.time_steps.max(1);
        if self.random_fact_count() * 2 > capacity {
            return fail("too many facts requested for the id space".into());
        }
        Ok(())
    }

    fn random_fact_count(&self) -> usize {
        (self.base_entities() * self.quads_per_entity).div_ceil(2)
    }
}

/// One planted twin pair: `x` and `y` are linked identically except for
/// their timestamps, which come from disjoint windows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPair {
    /// `[x, y]` in the first graph.
    pub g1: [EntityId; 2],
    /// `[x, y]` in the second graph.
    pub g2: [EntityId; 2],
    /// Shared neighbours, by label.
    pub neighbors: Vec<String>,
    pub relations: Vec<String>,
    /// Inclusive time-id windows of `x` and `y`.
    pub windows: [[TimeId; 2]; 2],
}

impl PlantedPair {
    pub fn test_pairs(&self) -> [(EntityId, EntityId); 2] {
        [(self.g1[0], self.g2[0]), (self.g1[1], self.g2[1])]
    }
}

/// Description written next to a forged dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgeManifest {
    pub kind: String,
    pub rng_seed: u64,
    pub overlap_ratio: f64,
    pub measured_overlap: f64,
    pub seed_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synth: Option<ForgeSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source: Option<String>,
    pub planted: Vec<PlantedPair>,
    pub planted_test_pairs: Vec<(EntityId, EntityId)>,
}

impl ForgeManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForgeOutput {
    pub dataset: Dataset,
    pub manifest: ForgeManifest,
}

/// Daily labels from 2005-01-01.
pub fn daily_time_index(steps: usize) -> TimeIndex {
    let start = NaiveDate::from_ymd_opt(2005, 1, 1).expect("valid date");
    let labels: Vec<String> = (0..steps)
        .map(|d| (start + Days::new(d as u64)).format("%Y-%m-%d").to_string())
        .collect();
    unify_time_sets(&labels, &[] as &[String]).expect("generated labels parse")
}

/// Chooses `count` training seeds from `candidates`, always including
/// `required`; the rest become test pairs.
fn choose_seeds<R: Rng>(
    candidates: &[(EntityId, EntityId)],
    required: &HashSet<(EntityId, EntityId)>,
    count: usize,
    rng: &mut R,
) -> (Vec<(EntityId, EntityId)>, Vec<(EntityId, EntityId)>) {
    let mut train: Vec<_> = candidates.iter().filter(|p| required.contains(p)).copied().collect();
    let mut rest: Vec<_> = candidates.iter().filter(|p| !required.contains(p)).copied().collect();
    rest.shuffle(rng);
    let extra = count.saturating_sub(train.len()).min(rest.len());
    train.extend(rest.drain(..extra));
    train.sort_unstable();
    rest.sort_unstable();
    (train, rest)
}

fn random_facts<R: Rng>(spec: &ForgeSpec, rng: &mut R) -> Result<Vec<Quadruple>> {
    let base = spec.base_entities();
    // a fact is untimed when either endpoint is static, so a static share
    // p gives an untimed share of about 1 − (1 − p)²
    let p = 1.0 - (1.0 - spec.non_temporal_ratio).sqrt();
    let statics: HashSet<EntityId> = sample(rng, base, (base as f64 * p).round() as usize).into_iter().collect();
    let target = spec.random_fact_count();
    let mut seen = HashSet::with_capacity(target);
    let mut facts = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while facts.len() < target {
        attempts += 1;
        if attempts > 100 * target + 1000 {
            return Err(Error::Infeasible("could not draw enough distinct facts".into()));
        }
        let s = rng.gen_range(0..base);
        let mut o = rng.gen_range(0..base - 1);
        if o >= s {
            o += 1;
        }
        let r = rng.gen_range(0..spec.relations);
        let t = if statics.contains(&s) || statics.contains(&o) {
            UNKNOWN_TIME
        } else {
            rng.gen_range(1..=spec.time_steps)
        };
        let q = Quadruple::new(s, r, o, TimeInterval::point(t));
        if seen.insert(q) {
            facts.push(q);
        }
    }
    Ok(facts)
}

/// Two disjoint windows `[a, a+w)` and `[b, b+w)` inside `1..=steps`.
fn disjoint_windows<R: Rng>(steps: usize, w: usize, rng: &mut R) -> [TimeId; 2] {
    let a = rng.gen_range(1..=steps - w + 1);
    loop {
        let b = rng.gen_range(1..=steps - w + 1);
        if b + w <= a || a + w <= b {
            return [a, b];
        }
    }
}

/// Random graph pair from `spec`, with `spec.planted` twin pairs added
/// identically to both sides. Every entity exists in both graphs.
pub fn synth_tkg(spec: &ForgeSpec) -> Result<ForgeOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = spec.base_entities();
    let facts = random_facts(spec, &mut rng)?;
    let num_times = spec.time_steps + 1;
    let source = TemporalKG::with_counts(spec.entities, spec.relations, facts, num_times)?;
    let split = split_overlap(&source, spec.overlap_ratio, true, &mut rng)?;

    let mut planted_quads = Vec::new();
    let mut planted = Vec::new();
    let mut anchors = HashSet::new();
    for p in 0..spec.planted {
        let twins = [base + 2 * p, base + 2 * p + 1];
        let neighbors = sample(&mut rng, base, spec.twin_neighbors).into_vec();
        let rels = sample(&mut rng, spec.relations, 2).into_vec();
        let starts = disjoint_windows(spec.time_steps, spec.twin_window, &mut rng);
        for (twin, start) in twins.iter().zip(starts) {
            for (j, &n) in neighbors.iter().enumerate() {
                let t = start + j % spec.twin_window;
                planted_quads.push(Quadruple::new(*twin, rels[j % 2], n, TimeInterval::point(t)));
            }
        }
        if spec.anchor_twins {
            anchors.extend(neighbors.iter().copied());
        }
        let side = |s: usize, e: EntityId| split.side_id(s, e).expect("all entities kept");
        planted.push(PlantedPair {
            g1: [side(0, twins[0]), side(0, twins[1])],
            g2: [side(1, twins[0]), side(1, twins[1])],
            neighbors: neighbors.iter().map(|&n| source.entity_labels()[n].clone()).collect(),
            relations: rels.iter().map(|&r| source.relation_labels()[r].clone()).collect(),
            windows: starts.map(|s| [s, s + spec.twin_window - 1]),
        });
    }

    let mut sides = Vec::with_capacity(2);
    for (s, g) in [&split.g1, &split.g2].into_iter().enumerate() {
        let mut quads = g.quadruples().to_vec();
        for q in &planted_quads {
            let id = |e: EntityId| split.side_id(s, e).expect("all entities kept");
            quads.push(Quadruple::new(id(q.subject), q.relation, id(q.object), q.interval));
        }
        sides.push(TemporalKG::new(g.entity_labels().to_vec(), g.relation_labels().to_vec(), quads, num_times)?);
    }

    let twin_ids: HashSet<EntityId> = planted.iter().flat_map(|p| p.g1).collect();
    let candidates: Vec<_> = split.gold.iter().filter(|p| !twin_ids.contains(&p.0)).copied().collect();
    let required: HashSet<_> = anchors
        .iter()
        .map(|&e| (split.side_id(0, e).unwrap(), split.side_id(1, e).unwrap()))
        .collect();
    let (train, mut test) = choose_seeds(&candidates, &required, spec.seed_count, &mut rng);
    let planted_test_pairs: Vec<_> = planted.iter().flat_map(|p| p.test_pairs()).collect();
    test.extend(planted_test_pairs.iter().copied());
    test.sort_unstable();

    let g2 = sides.pop().expect("two sides");
    let g1 = sides.pop().expect("two sides");
    let measured_overlap = measure_overlap(&split.g1, &split.g2);
    let dataset = Dataset::new(g1, g2, daily_time_index(spec.time_steps), SeedAlignments { train, test })?;
    Ok(ForgeOutput {
        dataset,
        manifest: ForgeManifest {
            kind: "synth".into(),
            rng_seed: spec.seed,
            overlap_ratio: spec.overlap_ratio,
            measured_overlap,
            seed_count: spec.seed_count,
            synth: Some(spec.clone()),
            source: None,
            planted,
            planted_test_pairs,
        },
    })
}

/// Splits `source` into an aligned graph pair and samples `seed_count`
/// training seeds from the entities present on both sides.
pub fn forge_split(
    source: &TemporalKG,
    times: &TimeIndex,
    ratio: f64,
    seed_count: usize,
    rng_seed: u64,
) -> Result<ForgeOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let split = split_overlap(source, ratio, false, &mut rng)?;
    if seed_count > split.gold.len() {
        return Err(Error::Infeasible(format!(
            "{seed_count} seeds requested but only {} entities are shared",
            split.gold.len()
        )));
    }
    let (train, test) = choose_seeds(&split.gold, &HashSet::new(), seed_count, &mut rng);
    let measured_overlap = measure_overlap(&split.g1, &split.g2);
    let dataset = Dataset::new(split.g1, split.g2, times.clone(), SeedAlignments { train, test })?;
    Ok(ForgeOutput {
        dataset,
        manifest: ForgeManifest {
            kind: "split".into(),
            rng_seed,
            overlap_ratio: ratio,
            measured_overlap,
            seed_count,
            synth: None,
            source: None,
            planted: Vec::new(),
            planted_test_pairs: Vec::new(),
        },
    })
}

/// Reads labelled facts, one per line: `subject relation object time` or
/// `subject relation object begin end`, tab-separated. Times are date
/// labels or `unknown`.
pub fn read_labeled_quads(path: &Path) -> Result<(TemporalKG, TimeIndex)> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let (b, e) = match cols.len() {
            4 => (cols[3], cols[3]),
            5 => (cols[3], cols[4]),
            c => return Err(Error::Parse {
                file: path.to_path_buf(),
                line: n + 1,
                message: format!("expected 4 or 5 columns, found {c}"),
            }),
        };
        rows.push((cols[0], cols[1], cols[2], b, e));
    }
    let labels: Vec<&str> = rows
        .iter()
        .flat_map(|r| [r.3, r.4])
        .filter(|l| *l != UNKNOWN_LABEL)
        .collect();
    let times = unify_time_sets(&labels, &[] as &[&str])?;
    let mut ents: Vec<String> = Vec::new();
    let mut rels: Vec<String> = Vec::new();
    let intern = |table: &mut Vec<String>, label: &str| match table.iter().position(|l| l == label) {
        Some(i) => i,
        None => {
            table.push(label.to_string());
            table.len() - 1
        }
    };
    let mut quads = Vec::with_capacity(rows.len());
    for (s, r, o, b, e) in rows {
        let time = |l: &str| if l == UNKNOWN_LABEL { UNKNOWN_TIME } else { times.id(l).expect("indexed above") };
        let (si, ri, oi) = (intern(&mut ents, s), intern(&mut rels, r), intern(&mut ents, o));
        quads.push(Quadruple::new(si, ri, oi, TimeInterval::new(time(b), time(e))));
    }
    let n = times.len();
    Ok((TemporalKG::new(ents, rels, quads, n)?, times))
}

/// Writes the dataset files, `manifest.json` and `stats.txt`.
pub fn write_forge_output(out: &ForgeOutput, dir: &Path, name: &str) -> Result<()> {
    write_dataset(&out.dataset, dir)?;
    let manifest = serde_json::to_string_pretty(&out.manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("manifest.json");
    fs::write(&path, manifest + "\n").map_err(|e| Error::io(&path, e))?;
    let stats = format_stats(name, &dataset_stats(&out.dataset), Some(out.manifest.measured_overlap));
    let path = dir.join("stats.txt");
    fs::write(&path, stats).map_err(|e| Error::io(&path, e))
}

/// One incident fact seen from an entity: direction, relation label,
/// neighbour label and, optionally, the time interval.
pub type SignatureEntry = (bool, String, String, Option<(TimeId, TimeId)>);

/// Sorted multiset of an entity's incident facts. Entities and relations
/// are compared by label, so signatures from different graphs match when
/// their labels do.
pub fn neighborhood_signature(kg: &TemporalKG, entity: EntityId, with_time: bool) -> Vec<SignatureEntry> {
    let mut sig = Vec::new();
    for q in kg.quadruples() {
        let time = with_time.then_some((q.interval.begin, q.interval.end));
        let rel = kg.relation_labels()[q.relation].clone();
        if q.subject == entity {
            sig.push((true, rel.clone(), kg.entity_labels()[q.object].clone(), time));
        }
        if q.object == entity {
            sig.push((false, rel, kg.entity_labels()[q.subject].clone(), time));
        }
    }
    sig.sort();
    sig
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlantedCheck {
    /// All four twins look identical once timestamps are ignored.
    pub blind_isomorphic: bool,
    /// With timestamps, each twin matches its counterpart and not its sibling.
    pub aware_separable: bool,
}

pub fn verify_planted(dataset: &Dataset, manifest: &ForgeManifest) -> Vec<PlantedCheck> {
    let strip = |sig: Vec<SignatureEntry>| -> Vec<(bool, String, String)> {
        sig.into_iter().map(|(d, r, n, _)| (d, r, n)).collect()
    };
    manifest
        .planted
        .iter()
        .map(|p| {
            let blind = |kg: &TemporalKG, e| strip(neighborhood_signature(kg, e, false));
            let aware = |kg: &TemporalKG, e| neighborhood_signature(kg, e, true);
            let b = [
                blind(&dataset.g1, p.g1[0]),
                blind(&dataset.g1, p.g1[1]),
                blind(&dataset.g2, p.g2[0]),
                blind(&dataset.g2, p.g2[1]),
            ];
            let a = [
                aware(&dataset.g1, p.g1[0]),
                aware(&dataset.g1, p.g1[1]),
                aware(&dataset.g2, p.g2[0]),
                aware(&dataset.g2, p.g2[1]),
            ];
            PlantedCheck {
                blind_isomorphic: !b[0].is_empty() && b.iter().all(|s| *s == b[0]),
                aware_separable: a[0] == a[2] && a[1] == a[3] && a[0] != a[1],
            }
        })
        .collect()
}
