use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tkg::{EntityId, Quadruple, TemporalKG};

/// Two overlapping graphs cut from one source graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlapSplit {
    pub g1: TemporalKG,
    pub g2: TemporalKG,
    /// Entities present on both sides, as `(id in g1, id in g2)`, sorted.
    pub gold: Vec<(EntityId, EntityId)>,
    /// Source entity behind every id, per side.
    pub source_entities: [Vec<EntityId>; 2],
    pub shared: usize,
}

impl OverlapSplit {
    /// Side id of a source entity, if present on that side.
    pub fn side_id(&self, side: usize, source: EntityId) -> Option<EntityId> {
        self.source_entities[side].iter().position(|&e| e == source)
    }
}

/// Number of shared and per-side exclusive quadruples for `n` facts.
pub fn overlap_counts(n: usize, ratio: f64) -> Result<(usize, usize, usize)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Infeasible(format!("overlap ratio {ratio} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::Infeasible("cannot split an empty quadruple set".into()));
    }
    let exact = n as f64 * ratio;
    let shared = exact.round() as usize;
    if (shared as f64 - exact).abs() > 1e-9 {
        log::warn!("{n} quadruples at ratio {ratio}: sharing {shared} instead of {exact}");
    }
    let rest = n - shared;
    Ok((shared, rest - rest / 2, rest / 2))
}

fn reindex<T: Copy + Ord + std::hash::Hash>(items: &HashSet<T>, shuffle: Option<&mut dyn rand::RngCore>) -> Vec<T> {
    let mut order: Vec<T> = items.iter().copied().collect();
    order.sort_unstable();
    if let Some(rng) = shuffle {
        order.shuffle(rng);
    }
    order
}

/// Randomly splits the quadruples of `source` into two graphs sharing a
/// `ratio` fraction of them; the remainder is divided evenly. Entities are
/// re-indexed densely and independently per side. With `keep_all_entities`
/// every source entity exists on both sides even without facts there.
pub fn split_overlap<R: Rng>(source: &TemporalKG, ratio: f64, keep_all_entities: bool, rng: &mut R) -> Result<OverlapSplit> {
    let quads = source.quadruples();
    let (shared, only1, _) = overlap_counts(quads.len(), ratio)?;
    let mut order: Vec<usize> = (0..quads.len()).collect();
    order.shuffle(rng);
    let mut sides: [Vec<Quadruple>; 2] = [Vec::new(), Vec::new()];
    for (pos, &q) in order.iter().enumerate() {
        if pos < shared {
            sides[0].push(quads[q]);
            sides[1].push(quads[q]);
        } else if pos < shared + only1 {
            sides[0].push(quads[q]);
        } else {
            sides[1].push(quads[q]);
        }
    }
    let num_times = quads
        .iter()
        .map(|q| q.interval.begin.max(q.interval.end) + 1)
        .max()
        .unwrap_or(1);
    let mut graphs = Vec::with_capacity(2);
    let mut source_entities: [Vec<EntityId>; 2] = [Vec::new(), Vec::new()];
    for (side, facts) in sides.iter_mut().enumerate() {
        facts.sort_unstable_by_key(|q| (q.subject, q.relation, q.object, q.interval.begin, q.interval.end));
        let ents: HashSet<EntityId> = if keep_all_entities {
            (0..source.num_entities()).collect()
        } else {
            facts.iter().flat_map(|q| [q.subject, q.object]).collect()
        };
        let rels: HashSet<usize> = if keep_all_entities {
            (0..source.num_relations()).collect()
        } else {
            facts.iter().map(|q| q.relation).collect()
        };
        let ent_order = reindex(&ents, Some(&mut *rng));
        let rel_order = reindex(&rels, None);
        let mut ent_map = vec![usize::MAX; source.num_entities()];
        for (new, &old) in ent_order.iter().enumerate() {
            ent_map[old] = new;
        }
        let mut rel_map = vec![usize::MAX; source.num_relations()];
        for (new, &old) in rel_order.iter().enumerate() {
            rel_map[old] = new;
        }
        let mapped = facts
            .iter()
            .map(|q| Quadruple::new(ent_map[q.subject], rel_map[q.relation], ent_map[q.object], q.interval))
            .collect();
        graphs.push(TemporalKG::new(
            ent_order.iter().map(|&e| source.entity_labels()[e].clone()).collect(),
            rel_order.iter().map(|&r| source.relation_labels()[r].clone()).collect(),
            mapped,
            num_times,
        )?);
        source_entities[side] = ent_order;
    }
    let mut pos2 = vec![usize::MAX; source.num_entities()];
    for (id, &e) in source_entities[1].iter().enumerate() {
        pos2[e] = id;
    }
    let gold = source_entities[0]
        .iter()
        .enumerate()
        .filter(|&(_, &e)| pos2[e] != usize::MAX)
        .map(|(id, &e)| (id, pos2[e]))
        .collect();
    let g2 = graphs.pop().expect("two sides");
    let g1 = graphs.pop().expect("two sides");
    Ok(OverlapSplit {
        g1,
        g2,
        gold,
        source_entities,
        shared,
    })
}

type LabeledFact<'a> = (&'a str, &'a str, &'a str, usize, usize);

fn labeled(kg: &TemporalKG) -> HashSet<LabeledFact<'_>> {
    kg.quadruples()
        .iter()
        .map(|q| {
            (
                kg.entity_labels()[q.subject].as_str(),
                kg.relation_labels()[q.relation].as_str(),
                kg.entity_labels()[q.object].as_str(),
                q.interval.begin,
                q.interval.end,
            )
        })
        .collect()
}

/// Shared facts over all distinct facts, matching entities and relations
/// by label.
pub fn measure_overlap(g1: &TemporalKG, g2: &TemporalKG) -> f64 {
    let (a, b) = (labeled(g1), labeled(g2));
    let shared = a.intersection(&b).count();
    let union = a.len() + b.len() - shared;
    if union == 0 {
        0.0
    } else {
        shared as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tkg::TimeInterval;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn source(n: usize) -> TemporalKG {
        let quads = (0..n)
            .map(|i| Quadruple::new(i % 17, i % 3, (i * 7 + 1) % 17, TimeInterval::point(1 + i % 5)))
            .collect::<Vec<_>>();
        let mut seen = HashSet::new();
        let quads: Vec<Quadruple> = quads.into_iter().filter(|q| q.subject != q.object && seen.insert(*q)).collect();
        TemporalKG::with_counts(17, 3, quads, 6).unwrap()
    }

    #[test]
    fn counts() {
        assert_eq!(overlap_counts(100, 0.5).unwrap(), (50, 25, 25));
        assert_eq!(overlap_counts(100, 1.0).unwrap(), (100, 0, 0));
        assert_eq!(overlap_counts(100, 0.0).unwrap(), (0, 50, 50));
        assert_eq!(overlap_counts(7, 0.0).unwrap(), (0, 4, 3));
        assert!(overlap_counts(10, 1.5).is_err());
        assert!(overlap_counts(10, f64::NAN).is_err());
        assert!(overlap_counts(0, 0.5).is_err());
    }

    #[test]
    fn half_overlap() {
        let src = source(100);
        let n = src.quadruples().len();
        let s = split_overlap(&src, 0.5, false, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (shared, a, b) = overlap_counts(n, 0.5).unwrap();
        assert_eq!(s.g1.quadruples().len(), shared + a);
        assert_eq!(s.g2.quadruples().len(), shared + b);
        assert!((measure_overlap(&s.g1, &s.g2) - shared as f64 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn full_and_zero_overlap() {
        let src = source(60);
        let s = split_overlap(&src, 1.0, false, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(measure_overlap(&s.g1, &s.g2), 1.0);
        assert_eq!(labeled(&s.g1), labeled(&src));
        let s = split_overlap(&src, 0.0, false, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(measure_overlap(&s.g1, &s.g2), 0.0);
        assert!(s.g1.quadruples().len().abs_diff(s.g2.quadruples().len()) <= 1);
    }

    #[test]
    fn union_recovers_source_and_gold_is_consistent() {
        let src = source(90);
        let s = split_overlap(&src, 0.3, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let union: HashSet<_> = labeled(&s.g1).union(&labeled(&s.g2)).copied().collect();
        assert_eq!(union, labeled(&src));
        for &(a, b) in &s.gold {
            assert_eq!(s.g1.entity_labels()[a], s.g2.entity_labels()[b]);
        }
        let kept = split_overlap(&src, 0.3, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(kept.g1.num_entities(), 17);
        assert_eq!(kept.gold.len(), 17);
    }
}
