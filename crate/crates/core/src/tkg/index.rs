use super::{DirectedLink, EntityId, RelationId, TimeId, UNKNOWN_TIME};
use crate::error::{Error, Result};

/// Inward links of every entity, grouped by object in CSR layout.
///
/// The timestamp multiset of an entity is the time of each of its inward
/// links. After reverse generation every fact touching an entity contributes
/// exactly one inward link to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodIndex {
    links: Vec<DirectedLink>,
    offsets: Vec<usize>,
    order: Vec<usize>,
    self_relation: Option<RelationId>,
}

pub fn build_neighborhoods(links: Vec<DirectedLink>, num_entities: usize) -> Result<NeighborhoodIndex> {
    if let Some(l) = links.iter().find(|l| l.subject >= num_entities || l.object >= num_entities) {
        return Err(Error::InvalidGraph(format!(
            "link {l:?} references an entity outside 0..{num_entities}"
        )));
    }
    Ok(NeighborhoodIndex::from_links(links, num_entities, None))
}

impl NeighborhoodIndex {
    fn from_links(links: Vec<DirectedLink>, num_entities: usize, self_relation: Option<RelationId>) -> Self {
        let mut offsets = vec![0usize; num_entities + 1];
        for l in &links {
            offsets[l.object + 1] += 1;
        }
        for i in 0..num_entities {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut order = vec![0usize; links.len()];
        for (id, l) in links.iter().enumerate() {
            order[cursor[l.object]] = id;
            cursor[l.object] += 1;
        }
        Self {
            links,
            offsets,
            order,
            self_relation,
        }
    }

    /// Appends one `(i, self_relation, i, τ0)` link per entity.
    pub fn with_self_loops(self, self_relation: RelationId) -> Self {
        let n = self.num_entities();
        let mut links = self.links;
        links.extend((0..n).map(|i| DirectedLink {
            subject: i,
            relation: self_relation,
            object: i,
            time: UNKNOWN_TIME,
        }));
        Self::from_links(links, n, Some(self_relation))
    }

    /// Same structure with every link timestamp replaced by τ0.
    pub fn time_unaware(&self) -> Self {
        let mut out = self.clone();
        for l in &mut out.links {
            l.time = UNKNOWN_TIME;
        }
        out
    }

    /// Whether any link, self-loops included, carries τ0.
    pub fn uses_unknown_time(&self) -> bool {
        self.links.iter().any(|l| l.time == UNKNOWN_TIME)
    }

    /// Whether some entity has no inward link at all.
    pub fn has_isolated(&self) -> bool {
        self.offsets.windows(2).any(|w| w[0] == w[1])
    }

    /// Renumbers time ids `t ↦ t − 1`, for models that keep no row for τ0.
    pub fn without_unknown_slot(&self) -> Result<Self> {
        if self.uses_unknown_time() {
            return Err(Error::InvalidGraph("index still uses the unknown time".into()));
        }
        let mut out = self.clone();
        for l in &mut out.links {
            l.time -= 1;
        }
        Ok(out)
    }

    pub fn num_entities(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[DirectedLink] {
        &self.links
    }

    pub fn self_relation(&self) -> Option<RelationId> {
        self.self_relation
    }

    pub fn is_self_loop(&self, link: &DirectedLink) -> bool {
        Some(link.relation) == self.self_relation && link.subject == link.object
    }

    /// Positions of `entity`'s inward links in the grouped order; ranges of
    /// consecutive entities are adjacent.
    pub fn inward_range(&self, entity: EntityId) -> std::ops::Range<usize> {
        self.offsets[entity]..self.offsets[entity + 1]
    }

    /// Link ids in grouped-by-object order.
    pub fn grouped_ids(&self) -> &[usize] {
        &self.order
    }

    /// Ids (positions in [`links`](Self::links)) of the inward links of `entity`.
    pub fn inward_ids(&self, entity: EntityId) -> &[usize] {
        &self.order[self.offsets[entity]..self.offsets[entity + 1]]
    }

    pub fn inward(&self, entity: EntityId) -> impl Iterator<Item = &DirectedLink> + '_ {
        self.inward_ids(entity).iter().map(move |&id| &self.links[id])
    }

    pub fn in_degree(&self, entity: EntityId) -> usize {
        self.offsets[entity + 1] - self.offsets[entity]
    }

    /// Timestamp multiset around `entity`.
    pub fn timestamps(&self, entity: EntityId) -> impl Iterator<Item = TimeId> + '_ {
        self.inward(entity).map(|l| l.time)
    }

    /// Inward links excluding the implementation's self-loops.
    pub fn graph_links(&self, entity: EntityId) -> impl Iterator<Item = &DirectedLink> + '_ {
        self.inward(entity).filter(move |l| !self.is_self_loop(l))
    }

    /// Smallest relation-table size that covers every link.
    pub fn relation_bound(&self) -> usize {
        self.links.iter().map(|l| l.relation + 1).max().unwrap_or(0)
    }

    pub fn time_bound(&self) -> usize {
        self.links.iter().map(|l| l.time + 1).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tkg::{generate_reverse_links, Quadruple, TemporalKG, TimeInterval};

    fn link(s: usize, r: usize, o: usize, t: usize) -> DirectedLink {
        DirectedLink { subject: s, relation: r, object: o, time: t }
    }

    #[test]
    fn single_link() {
        let idx = build_neighborhoods(vec![link(0, 0, 1, 1)], 2).unwrap();
        assert_eq!(idx.inward(1).copied().collect::<Vec<_>>(), vec![link(0, 0, 1, 1)]);
        assert_eq!(idx.inward(0).count(), 0);
        assert_eq!(idx.timestamps(1).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn reverse_generation_gives_each_side_one_inward_link() {
        let kg = TemporalKG::with_counts(2, 1, vec![Quadruple::new(0, 0, 1, TimeInterval::new(1, 2))], 3).unwrap();
        let idx = build_neighborhoods(generate_reverse_links(&kg), 2).unwrap();
        assert_eq!(idx.in_degree(0), 1);
        assert_eq!(idx.in_degree(1), 1);
        assert_eq!(idx.timestamps(0).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn five_quadruple_fixture_matches_scan() {
        let quads = vec![
            Quadruple::new(0, 0, 1, TimeInterval::new(1, 2)),
            Quadruple::new(1, 1, 2, TimeInterval::point(3)),
            Quadruple::new(2, 0, 0, TimeInterval::UNKNOWN),
            Quadruple::new(3, 1, 1, TimeInterval::new(0, 4)),
            Quadruple::new(1, 0, 1, TimeInterval::point(2)),
        ];
        let kg = TemporalKG::with_counts(5, 2, quads, 5).unwrap();
        let links = generate_reverse_links(&kg);
        let idx = build_neighborhoods(links.clone(), 5).unwrap();
        for e in 0..5 {
            let mut expected: Vec<DirectedLink> = links.iter().filter(|l| l.object == e).copied().collect();
            let mut got: Vec<DirectedLink> = idx.inward(e).copied().collect();
            expected.sort();
            got.sort();
            assert_eq!(got, expected, "entity {e}");
        }
        assert_eq!(idx.in_degree(4), 0);
        assert_eq!(idx.in_degree(1), 5);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(build_neighborhoods(vec![link(0, 0, 2, 0)], 2).is_err());
    }

    #[test]
    fn self_loops_and_time_unaware() {
        let idx = build_neighborhoods(vec![link(0, 0, 1, 3)], 2).unwrap().with_self_loops(2);
        assert_eq!(idx.in_degree(0), 1);
        assert_eq!(idx.in_degree(1), 2);
        assert_eq!(idx.graph_links(1).count(), 1);
        assert_eq!(idx.graph_links(0).count(), 0);
        let tu = idx.time_unaware();
        assert!(tu.links().iter().all(|l| l.time == UNKNOWN_TIME));
        assert_eq!(tu.time_unaware(), tu);
        assert_eq!(tu.inward_ids(1), idx.inward_ids(1));
    }
}
