use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use tea_core::eval::{
    partition_test_pairs, rank_pairs, subset_report, write_report_files, BaseSimilarity, Direction, Partition, ReportRow,
};
use tea_core::model::TimeView;
use tea_core::tkg::{parse_dataset, Dataset};
use tea_core::trainer::{eval_representations, restore_model};
use tea_core::Real;

use crate::args::{resolve_data, EvalArgs};
use crate::manifest::{RunEntry, RunManifest, MANIFEST_FILE};

pub fn run(a: EvalArgs) -> anyhow::Result<()> {
    let data = resolve_data(&a.data);
    let mut manifest = RunManifest::new("eval", Some(&data), !a.no_timing);
    let outcome = evaluate(&a, &data, &mut manifest);
    if let Some(out) = &a.out {
        manifest.finish(out, MANIFEST_FILE, &outcome)?;
    }
    outcome
}

/// The `precision` header line, read without parsing the tensors.
fn checkpoint_precision(path: &Path) -> anyhow::Result<String> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow::Error::new(tea_core::Error::MissingFile(path.to_path_buf())),
        _ => anyhow::Error::new(e).context(format!("reading {}", path.display())),
    })?;
    text.lines()
        .take(16)
        .find_map(|l| l.strip_prefix("precision ").map(str::to_string))
        .ok_or_else(|| tea_core::Error::Checkpoint(format!("{} has no precision field", path.display())).into())
}

fn evaluate(a: &EvalArgs, data: &Path, manifest: &mut RunManifest) -> anyhow::Result<()> {
    manifest.config = serde_json::json!({
        "checkpoint": a.checkpoint.display().to_string(),
        "metric": format!("{:?}", a.metric).to_lowercase(),
        "k_csls": a.k_csls,
        "base": format!("{:?}", a.base).to_lowercase(),
        "partition": a.partition,
        "threshold": a.threshold,
        "direction": Direction::from(a.direction).as_str(),
    });
    if a.k_csls == 0 {
        return Err(tea_core::Error::Config("--k-csls must be at least 1".into()).into());
    }
    let precision = checkpoint_precision(&a.checkpoint)?;
    let dataset = parse_dataset(data)?;
    let start = Instant::now();
    let (seed, mut rows) = match precision.as_str() {
        "f32" => rows_for::<f32>(a, &dataset)?,
        "f64" => rows_for::<f64>(a, &dataset)?,
        other => return Err(tea_core::Error::Checkpoint(format!("unsupported precision `{other}`")).into()),
    };
    let secs = if a.no_timing { 0.0 } else { start.elapsed().as_secs_f64() };
    rows.iter_mut().for_each(|r| r.runtime_seconds = secs);
    manifest.seeds = vec![seed];
    println!("{}", serde_json::to_string_pretty(&rows)?);
    if let Some(out) = &a.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_report_files(&rows, &out.join("report.json"), &out.join("report.csv"))?;
    }
    manifest.runs.push(RunEntry {
        seed,
        dir: String::new(),
        status: "ok".into(),
        error: None,
        metrics: rows,
    });
    Ok(())
}

fn rows_for<T: Real>(a: &EvalArgs, dataset: &Dataset) -> anyhow::Result<(u64, Vec<ReportRow>)> {
    let (header, params, index) = restore_model::<T>(dataset, &a.checkpoint)?;
    let reps = eval_representations(&params, &index, TimeView::Multiset)?;
    let pairs = dataset.merge_pairs(&dataset.seeds.test);
    let base: BaseSimilarity = a.base.into();
    let direction: Direction = a.direction.into();
    let split = a
        .partition
        .then(|| partition_test_pairs(&pairs, &dataset.neighborhoods(false), a.threshold));
    let mut rows = Vec::new();
    for space in a.metric.spaces() {
        let full = rank_pairs(&reps, &pairs, space, base, a.k_csls, direction)?;
        rows.extend(full.rows(header.seed, 0.0));
        if let Some((highly, lowly)) = &split {
            rows.extend(subset_report(&full, highly, Partition::Highly).rows(header.seed, 0.0));
            rows.extend(subset_report(&full, lowly, Partition::Lowly).rows(header.seed, 0.0));
        }
    }
    Ok((header.seed, rows))
}
