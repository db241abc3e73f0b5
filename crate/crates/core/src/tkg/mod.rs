//! Temporal knowledge graph data model.
//!
//! Two graphs are aligned over one shared [`TimeIndex`]. For training they are
//! merged into a single disjoint id space: entities of the second graph are
//! offset by `|E1|`, relations by `|R1|`, and the reverse of merged relation
//! `j` is `j + |R1| + |R2|`.

mod index;
mod io;
mod time;

use std::collections::HashSet;

pub use index::{build_neighborhoods, NeighborhoodIndex};
pub use io::{parse_dataset, write_dataset, DATASET_FILES};
pub use time::{unify_time_sets, TimeId, TimeIndex, UNKNOWN_LABEL, UNKNOWN_TIME};

use crate::error::{Error, Result};

pub type EntityId = usize;
pub type RelationId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeInterval {
    pub begin: TimeId,
    pub end: TimeId,
}

impl TimeInterval {
    pub const UNKNOWN: TimeInterval = TimeInterval {
        begin: UNKNOWN_TIME,
        end: UNKNOWN_TIME,
    };

    pub fn point(t: TimeId) -> Self {
        Self { begin: t, end: t }
    }

    pub fn new(begin: TimeId, end: TimeId) -> Self {
        Self { begin, end }
    }

    pub fn is_unknown(&self) -> bool {
        self.begin == UNKNOWN_TIME && self.end == UNKNOWN_TIME
    }
}

/// One temporal fact `(subject, relation, object, [begin, end])`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub interval: TimeInterval,
}

impl Quadruple {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId, interval: TimeInterval) -> Self {
        Self {
            subject,
            relation,
            object,
            interval,
        }
    }
}

/// A single directed edge after interval decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedLink {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub time: TimeId,
}

/// One graph `(E, R, T*, Q)`. Entity and relation ids are dense from 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalKG {
    entity_labels: Vec<String>,
    relation_labels: Vec<String>,
    quadruples: Vec<Quadruple>,
}

impl TemporalKG {
    /// Validates every quadruple against the id sets and drops exact
    /// duplicates (keeping the first occurrence) with a warning.
    pub fn new(
        entity_labels: Vec<String>,
        relation_labels: Vec<String>,
        quadruples: Vec<Quadruple>,
        num_times: usize,
    ) -> Result<Self> {
        let (ne, nr) = (entity_labels.len(), relation_labels.len());
        for (i, q) in quadruples.iter().enumerate() {
            if q.subject >= ne || q.object >= ne {
                return Err(Error::InvalidGraph(format!("quadruple {i} references an entity outside 0..{ne}")));
            }
            if q.relation >= nr {
                return Err(Error::InvalidGraph(format!("quadruple {i} references a relation outside 0..{nr}")));
            }
            if q.interval.begin >= num_times || q.interval.end >= num_times {
                return Err(Error::InvalidGraph(format!("quadruple {i} references a time outside 0..{num_times}")));
            }
        }
        let mut seen = HashSet::with_capacity(quadruples.len());
        let total = quadruples.len();
        let quadruples: Vec<Quadruple> = quadruples.into_iter().filter(|q| seen.insert(*q)).collect();
        if quadruples.len() < total {
            log::warn!("dropped {} duplicate quadruple(s)", total - quadruples.len());
        }
        Ok(Self {
            entity_labels,
            relation_labels,
            quadruples,
        })
    }

    /// Graph with generated labels `e{i}` / `r{j}`.
    pub fn with_counts(
        num_entities: usize,
        num_relations: usize,
        quadruples: Vec<Quadruple>,
        num_times: usize,
    ) -> Result<Self> {
        Self::new(
            (0..num_entities).map(|i| format!("e{i}")).collect(),
            (0..num_relations).map(|j| format!("r{j}")).collect(),
            quadruples,
            num_times,
        )
    }

    pub fn num_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn quadruples(&self) -> &[Quadruple] {
        &self.quadruples
    }

    pub fn entity_labels(&self) -> &[String] {
        &self.entity_labels
    }

    pub fn relation_labels(&self) -> &[String] {
        &self.relation_labels
    }

    /// Disjoint union: `other`'s entity ids are shifted by `self.num_entities()`
    /// and its relation ids by `self.num_relations()`.
    pub fn disjoint_union(&self, other: &TemporalKG) -> TemporalKG {
        let (eo, ro) = (self.num_entities(), self.num_relations());
        let quadruples = self
            .quadruples
            .iter()
            .copied()
            .chain(other.quadruples.iter().map(|q| Quadruple {
                subject: q.subject + eo,
                relation: q.relation + ro,
                object: q.object + eo,
                interval: q.interval,
            }))
            .collect();
        TemporalKG {
            entity_labels: self.entity_labels.iter().chain(&other.entity_labels).cloned().collect(),
            relation_labels: self.relation_labels.iter().chain(&other.relation_labels).cloned().collect(),
            quadruples,
        }
    }
}

/// Id of the reverse of `relation` in a graph with `num_relations` base relations.
pub fn reverse_relation(relation: RelationId, num_relations: usize) -> RelationId {
    if relation < num_relations {
        relation + num_relations
    } else {
        relation - num_relations
    }
}

/// Id of the self-loop relation, placed right after the reverse block.
pub fn self_relation(num_relations: usize) -> RelationId {
    2 * num_relations
}

/// Decomposes every fact `(s, r, o, [b, e])` into `(s, r, o, b)` and
/// `(o, r⁻¹, s, e)`, with `r⁻¹ = r + |R|`.
pub fn generate_reverse_links(kg: &TemporalKG) -> Vec<DirectedLink> {
    let nr = kg.num_relations();
    let mut links = Vec::with_capacity(2 * kg.quadruples.len());
    for q in &kg.quadruples {
        links.push(DirectedLink {
            subject: q.subject,
            relation: q.relation,
            object: q.object,
            time: q.interval.begin,
        });
        links.push(DirectedLink {
            subject: q.object,
            relation: q.relation + nr,
            object: q.subject,
            time: q.interval.end,
        });
    }
    links
}

/// Pre-aligned pairs `(id in G1, id in G2)`: `train` is the seed set S,
/// `test` is P − S.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedAlignments {
    pub train: Vec<(EntityId, EntityId)>,
    pub test: Vec<(EntityId, EntityId)>,
}

impl SeedAlignments {
    /// Checks id ranges and that no entity is used by more than one pair,
    /// within or across splits.
    pub fn validate(&self, n1: usize, n2: usize) -> Result<()> {
        let mut left = HashSet::new();
        let mut right = HashSet::new();
        for (name, pairs) in [("train", &self.train), ("test", &self.test)] {
            for &(a, b) in pairs {
                if a >= n1 || b >= n2 {
                    return Err(Error::InvalidGraph(format!("{name} pair ({a}, {b}) out of range")));
                }
                if !left.insert(a) || !right.insert(b) {
                    return Err(Error::InvalidGraph(format!("{name} pair ({a}, {b}) reuses an entity")));
                }
            }
        }
        Ok(())
    }

    pub fn num_reference(&self) -> usize {
        self.train.len() + self.test.len()
    }
}

/// Two graphs over one shared time index plus their alignment seeds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub g1: TemporalKG,
    pub g2: TemporalKG,
    pub times: TimeIndex,
    pub seeds: SeedAlignments,
}

impl Dataset {
    pub fn new(g1: TemporalKG, g2: TemporalKG, times: TimeIndex, seeds: SeedAlignments) -> Result<Self> {
        seeds.validate(g1.num_entities(), g2.num_entities())?;
        for q in g1.quadruples().iter().chain(g2.quadruples()) {
            if q.interval.begin >= times.len() || q.interval.end >= times.len() {
                return Err(Error::InvalidGraph(format!("time id outside 0..{}", times.len())));
            }
        }
        Ok(Self { g1, g2, times, seeds })
    }

    pub fn num_entities(&self) -> usize {
        self.g1.num_entities() + self.g2.num_entities()
    }

    /// Base relations of both graphs, reverses excluded.
    pub fn num_base_relations(&self) -> usize {
        self.g1.num_relations() + self.g2.num_relations()
    }

    /// Both graphs in one id space.
    pub fn merged(&self) -> TemporalKG {
        self.g1.disjoint_union(&self.g2)
    }

    /// Maps `(id in G1, id in G2)` pairs into the merged entity space.
    pub fn merge_pairs(&self, pairs: &[(EntityId, EntityId)]) -> Vec<(EntityId, EntityId)> {
        let off = self.g1.num_entities();
        pairs.iter().map(|&(a, b)| (a, b + off)).collect()
    }

    /// Neighbourhood index over the merged graph, optionally with one
    /// self-loop per entity on [`self_relation`].
    pub fn neighborhoods(&self, self_loops: bool) -> NeighborhoodIndex {
        let merged = self.merged();
        let links = generate_reverse_links(&merged);
        let index = build_neighborhoods(links, merged.num_entities()).expect("merged graph ids validated on construction");
        if self_loops {
            index.with_self_loops(self_relation(merged.num_relations()))
        } else {
            index
        }
    }
}
