//! Dataset directory format (tab-separated, UTF-8):
//!
//! | file | line format |
//! |------|-------------|
//! | `triples_1`, `triples_2` | `subject relation object begin_time end_time` |
//! | `ent_ids_1`, `ent_ids_2`, `rel_ids_1`, `rel_ids_2` | `id label` |
//! | `time_id` | `id label` (id 0 is the unknown-time sentinel) |
//! | `sup_pairs`, `ref_pairs` | `id_in_g1 id_in_g2` |

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Dataset, EntityId, Quadruple, SeedAlignments, TemporalKG, TimeIndex, TimeInterval};
use crate::error::{Error, Result};

pub const DATASET_FILES: [&str; 9] = [
    "triples_1",
    "triples_2",
    "ent_ids_1",
    "ent_ids_2",
    "rel_ids_1",
    "rel_ids_2",
    "time_id",
    "sup_pairs",
    "ref_pairs",
];

struct Lines {
    path: PathBuf,
    text: String,
}

impl Lines {
    fn open(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, text })
    }

    /// Non-blank lines with 1-based line numbers.
    fn iter(&self) -> impl Iterator<Item = (usize, &str)> {
        self.text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty())
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::parse(&self.path, line, message)
    }

    fn int(&self, line: usize, field: &str, what: &str) -> Result<usize> {
        field
            .trim()
            .parse()
            .map_err(|_| self.err(line, format!("{what} `{field}` is not a non-negative integer")))
    }

    fn columns<'a>(&self, line: usize, text: &'a str, expected: usize) -> Result<Vec<&'a str>> {
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != expected {
            return Err(self.err(line, format!("expected {expected} tab-separated columns, found {}", cols.len())));
        }
        Ok(cols)
    }

    /// `id<TAB>label` entries; ids must be dense `0..n`.
    fn labels(&self) -> Result<Vec<String>> {
        let mut slots: Vec<Option<String>> = Vec::new();
        let mut seen_lines = Vec::new();
        for (no, text) in self.iter() {
            let (id, label) = text.split_once('\t').ok_or_else(|| self.err(no, "expected `id<TAB>label`"))?;
            let id = self.int(no, id, "id")?;
            if id >= slots.len() {
                slots.resize(id + 1, None);
            }
            if slots[id].replace(label.to_string()).is_some() {
                return Err(self.err(no, format!("id {id} defined twice")));
            }
            seen_lines.push((id, no));
        }
        if let Some(missing) = slots.iter().position(Option::is_none) {
            let last = seen_lines.last().map_or(0, |&(_, no)| no);
            return Err(self.err(last, format!("ids are not dense: {missing} is missing")));
        }
        Ok(slots.into_iter().map(Option::unwrap).collect())
    }

    fn time_index(&self) -> Result<TimeIndex> {
        let mut entries = Vec::new();
        for (no, text) in self.iter() {
            let (id, label) = text.split_once('\t').ok_or_else(|| self.err(no, "expected `id<TAB>label`"))?;
            entries.push((self.int(no, id, "time id")?, label.to_string()));
        }
        TimeIndex::from_entries(&entries).map_err(|m| self.err(0, m))
    }

    fn quadruples(&self, num_entities: usize, num_relations: usize, num_times: usize) -> Result<Vec<Quadruple>> {
        let mut out = Vec::new();
        for (no, text) in self.iter() {
            let c = self.columns(no, text, 5)?;
            let s = self.int(no, c[0], "subject")?;
            let r = self.int(no, c[1], "relation")?;
            let o = self.int(no, c[2], "object")?;
            let b = self.int(no, c[3], "begin time")?;
            let e = self.int(no, c[4], "end time")?;
            for (what, id, bound) in [("entity", s, num_entities), ("relation", r, num_relations), ("entity", o, num_entities), ("time", b, num_times), ("time", e, num_times)] {
                if id >= bound {
                    return Err(self.err(no, format!("dangling {what} id {id} (known ids 0..{bound})")));
                }
            }
            out.push(Quadruple::new(s, r, o, TimeInterval::new(b, e)));
        }
        Ok(out)
    }

    fn pairs(&self, n1: usize, n2: usize, used: &mut (HashSet<EntityId>, HashSet<EntityId>)) -> Result<Vec<(EntityId, EntityId)>> {
        let mut out = Vec::new();
        for (no, text) in self.iter() {
            let c = self.columns(no, text, 2)?;
            let a = self.int(no, c[0], "entity")?;
            let b = self.int(no, c[1], "entity")?;
            if a >= n1 {
                return Err(self.err(no, format!("dangling G1 entity id {a}")));
            }
            if b >= n2 {
                return Err(self.err(no, format!("dangling G2 entity id {b}")));
            }
            if !used.0.insert(a) {
                return Err(self.err(no, format!("duplicate seed entity {a} in G1")));
            }
            if !used.1.insert(b) {
                return Err(self.err(no, format!("duplicate seed entity {b} in G2")));
            }
            out.push((a, b));
        }
        Ok(out)
    }
}

/// Reads a dataset directory. Every file listed in [`DATASET_FILES`] must exist.
pub fn parse_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let open = |name| Lines::open(dir, name);
    let files: Vec<Lines> = DATASET_FILES.iter().map(|n| open(n)).collect::<Result<_>>()?;
    let [t1, t2, e1, e2, r1, r2, tid, sup, refp] = <[Lines; 9]>::try_from(files).ok().expect("nine files");

    let times = tid.time_index()?;
    let (ents1, ents2) = (e1.labels()?, e2.labels()?);
    let (rels1, rels2) = (r1.labels()?, r2.labels()?);
    let q1 = t1.quadruples(ents1.len(), rels1.len(), times.len())?;
    let q2 = t2.quadruples(ents2.len(), rels2.len(), times.len())?;
    let mut used = (HashSet::new(), HashSet::new());
    let train = sup.pairs(ents1.len(), ents2.len(), &mut used)?;
    let test = refp.pairs(ents1.len(), ents2.len(), &mut used)?;

    let g1 = TemporalKG::new(ents1, rels1, q1, times.len())?;
    let g2 = TemporalKG::new(ents2, rels2, q2, times.len())?;
    log::info!(
        "loaded {}: |E1|={} |E2|={} |R1|={} |R2|={} |T*|={} |Q1|={} |Q2|={} |S|={} |P-S|={}",
        dir.display(),
        g1.num_entities(),
        g2.num_entities(),
        g1.num_relations(),
        g2.num_relations(),
        times.len(),
        g1.quadruples().len(),
        g2.quadruples().len(),
        train.len(),
        test.len()
    );
    Dataset::new(g1, g2, times, SeedAlignments { train, test })
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))
}

fn label_body(labels: &[String]) -> String {
    labels.iter().enumerate().map(|(i, l)| format!("{i}\t{l}\n")).collect()
}

fn quad_body(kg: &TemporalKG) -> String {
    kg.quadruples()
        .iter()
        .map(|q| format!("{}\t{}\t{}\t{}\t{}\n", q.subject, q.relation, q.object, q.interval.begin, q.interval.end))
        .collect()
}

fn pair_body(pairs: &[(EntityId, EntityId)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
}

/// Writes `dataset` in the directory format read by [`parse_dataset`],
/// creating `dir` if needed.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir, "triples_1", &quad_body(&dataset.g1))?;
    write_file(dir, "triples_2", &quad_body(&dataset.g2))?;
    write_file(dir, "ent_ids_1", &label_body(dataset.g1.entity_labels()))?;
    write_file(dir, "ent_ids_2", &label_body(dataset.g2.entity_labels()))?;
    write_file(dir, "rel_ids_1", &label_body(dataset.g1.relation_labels()))?;
    write_file(dir, "rel_ids_2", &label_body(dataset.g2.relation_labels()))?;
    let times: String = dataset.times.entries().map(|(i, l)| format!("{i}\t{l}\n")).collect();
    write_file(dir, "time_id", &times)?;
    write_file(dir, "sup_pairs", &pair_body(&dataset.seeds.train))?;
    write_file(dir, "ref_pairs", &pair_body(&dataset.seeds.test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) {
        let files = [
            ("triples_1", "0\t0\t1\t1\t1\n1\t0\t2\t2\t0\n"),
            ("triples_2", "0\t0\t1\t1\t1\n2\t1\t0\t0\t0\n"),
            ("ent_ids_1", "0\ta\n1\tb\n2\tc\n"),
            ("ent_ids_2", "1\tB\n0\tA\n2\tC\n"),
            ("rel_ids_1", "0\tvisit\n"),
            ("rel_ids_2", "0\tvisit\n1\tmeet\n"),
            ("time_id", "0\tunknown\n1\t2005-01-01\n2\t2005-01-02\n"),
            ("sup_pairs", "0\t0\n"),
            ("ref_pairs", "1\t1\n2\t2\n"),
        ];
        for (name, body) in files {
            fs::write(dir.join(name), body).unwrap();
        }
    }

    #[test]
    fn fixture_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        let ds = parse_dataset(tmp.path()).unwrap();
        assert_eq!(ds.g1.quadruples().len(), 2);
        assert_eq!(ds.g2.quadruples().len(), 2);
        assert_eq!(ds.g2.entity_labels()[0], "A");
        assert_eq!(ds.times.len(), 3);
        assert_eq!(ds.seeds.train, vec![(0, 0)]);

        let out = tempfile::tempdir().unwrap();
        write_dataset(&ds, out.path()).unwrap();
        assert_eq!(parse_dataset(out.path()).unwrap(), ds);
    }

    #[test]
    fn wrong_column_count_names_line() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        fs::write(tmp.path().join("triples_1"), "0\t0\t1\t1\t1\n0\t0\t1\n").unwrap();
        let err = parse_dataset(tmp.path()).unwrap_err();
        match &err {
            Error::Parse { file, line, .. } => {
                assert!(file.ends_with("triples_1"));
                assert_eq!(*line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("triples_1:2"));
    }

    #[test]
    fn non_integer_and_dangling_ids() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        fs::write(tmp.path().join("triples_2"), "0\tx\t1\t1\t1\n").unwrap();
        assert!(matches!(parse_dataset(tmp.path()), Err(Error::Parse { line: 1, .. })));
        fs::write(tmp.path().join("triples_2"), "0\t0\t9\t1\t1\n").unwrap();
        let err = parse_dataset(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("dangling entity id 9"), "{err}");
        fs::write(tmp.path().join("triples_2"), "0\t0\t1\t7\t1\n").unwrap();
        assert!(parse_dataset(tmp.path()).unwrap_err().to_string().contains("dangling time"));
    }

    #[test]
    fn duplicate_seed_entity() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        fs::write(tmp.path().join("ref_pairs"), "1\t1\n0\t2\n").unwrap();
        let err = parse_dataset(tmp.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_file_named() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        fs::remove_file(tmp.path().join("sup_pairs")).unwrap();
        match parse_dataset(tmp.path()) {
            Err(Error::MissingFile(p)) => assert!(p.ends_with("sup_pairs")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_quadruples_dropped() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path());
        fs::write(tmp.path().join("triples_1"), "0\t0\t1\t1\t1\n0\t0\t1\t1\t1\n").unwrap();
        assert_eq!(parse_dataset(tmp.path()).unwrap().g1.quadruples().len(), 1);
    }
}
