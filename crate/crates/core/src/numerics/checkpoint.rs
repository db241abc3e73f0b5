//! Plain-text checkpoint container.
//!
//! ```text
//! TEA-CHECKPOINT v1
//! dim <k>
//! layers <L>
//! entities <rows of the entity table>
//! relations <rows of the relation table>
//! times <rows of the time table>
//! precision <f32|f64>
//! seed <u64>
//! self_loops <true|false>
//! mode <time-aware|time-unaware>
//! params <count>
//! param <name> <rows> <cols>
//! <one line per row, space-separated values>
//! ...
//! end
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! checkpoint re-reads bit-exactly at the precision it was written with.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DenseMatrix, ParameterStore, Real};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "TEA-CHECKPOINT v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub dim: usize,
    pub layers: usize,
    pub entities: usize,
    pub relations: usize,
    pub times: usize,
    pub precision: String,
    pub seed: u64,
    pub self_loops: bool,
    pub mode: String,
}

pub fn write_checkpoint<T: Real>(path: impl AsRef<Path>, header: &CheckpointHeader, store: &ParameterStore<T>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let h = header;
    writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(out, "dim {}\nlayers {}\nentities {}\nrelations {}\ntimes {}", h.dim, h.layers, h.entities, h.relations, h.times).unwrap();
    writeln!(out, "precision {}\nseed {}\nself_loops {}\nmode {}", h.precision, h.seed, h.self_loops, h.mode).unwrap();
    writeln!(out, "params {}", store.len()).unwrap();
    for p in store.iter() {
        writeln!(out, "param {} {} {}", p.name, p.value.rows(), p.value.cols()).unwrap();
        for i in 0..p.value.rows() {
            let row: Vec<String> = p.value.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
    }
    out.push_str("end\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn next_field<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<String> {
    let line = lines.next().ok_or_else(|| bad(format!("missing `{key}`")))?;
    match line.split_once(' ') {
        Some((k, v)) if k == key => Ok(v.to_string()),
        _ => Err(bad(format!("expected `{key}`, found `{line}`"))),
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn read_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(CheckpointHeader, ParameterStore<T>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad(format!("{} is not a v1 checkpoint", path.display())));
    }
    let mut field = |key: &str| next_field(&mut lines, key);
    let num = |s: String, key: &str| s.parse::<usize>().map_err(|_| bad(format!("bad `{key}` value `{s}`")));
    let header = CheckpointHeader {
        dim: num(field("dim")?, "dim")?,
        layers: num(field("layers")?, "layers")?,
        entities: num(field("entities")?, "entities")?,
        relations: num(field("relations")?, "relations")?,
        times: num(field("times")?, "times")?,
        precision: field("precision")?,
        seed: field("seed")?.parse().map_err(|_| bad("bad seed"))?,
        self_loops: field("self_loops")?.parse().map_err(|_| bad("bad self_loops"))?,
        mode: field("mode")?,
    };
    let count = num(field("params")?, "params")?;
    let mut store = ParameterStore::new();
    for _ in 0..count {
        let spec = next_field(&mut lines, "param")?;
        let parts: Vec<&str> = spec.split(' ').collect();
        if parts.len() != 3 {
            return Err(bad(format!("bad param line `{spec}`")));
        }
        let rows = num(parts[1].to_string(), "rows")?;
        let cols = num(parts[2].to_string(), "cols")?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| bad(format!("truncated tensor `{}`", parts[0])))?;
            for v in line.split_ascii_whitespace() {
                data.push(v.parse::<T>().map_err(|_| bad(format!("bad value `{v}` in `{}`", parts[0])))?);
            }
        }
        let m = DenseMatrix::from_vec(rows, cols, data).map_err(|_| bad(format!("tensor `{}` has wrong size", parts[0])))?;
        store.add(parts[0], m);
    }
    if lines.next() != Some("end") {
        return Err(bad("missing `end` marker"));
    }
    Ok((header, store))
}
