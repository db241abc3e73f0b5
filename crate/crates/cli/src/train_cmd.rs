use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;
use tea_core::eval::{write_report_files, Direction, MetricSpace, ReportRow};
use tea_core::tkg::{parse_dataset, Dataset};
use tea_core::trainer::{TrainConfig, TrainReport, Trainer};
use tea_core::Real;

use crate::args::{resolve_data, OnOff, Precision, TrainArgs, UsageError};
use crate::manifest::{summarize, summary_csv, RunEntry, RunManifest, MANIFEST_FILE};

pub const CHECKPOINT_FILE: &str = "checkpoint.tea";

pub fn load_config(path: &Path) -> anyhow::Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => anyhow::Error::new(tea_core::Error::MissingFile(path.to_path_buf())),
        _ => anyhow::Error::new(e).context(format!("reading {}", path.display())),
    })?;
    toml::from_str(&text).map_err(|e| tea_core::Error::Config(format!("{}: {e}", path.display())).into())
}

/// Defaults, then the config file, then explicit flags.
pub fn build_config(a: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut c = match &a.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = a.$field { c.$field = v; })*
        };
    }
    set!(dim, layers, lr, margin, dropout, epochs, eval_every, k_csls, seed);
    if a.neg_per_pos.is_some() {
        c.neg_per_pos = a.neg_per_pos;
    }
    if a.batch_size.is_some() {
        c.batch_size = a.batch_size;
    }
    if a.patience.is_some() {
        c.patience = a.patience;
    }
    if let Some(m) = a.mode {
        c.mode = m.into();
    }
    if let Some(s) = a.self_loops {
        c.self_loops = s == OnOff::On;
    }
    c.validate()?;
    Ok(c)
}

pub fn run(a: TrainArgs) -> anyhow::Result<()> {
    let data = resolve_data(&a.data);
    let mut manifest = RunManifest::new("train", Some(&data), !a.no_timing);
    let outcome = train_all(&a, &data, &mut manifest);
    manifest.finish(&a.out, MANIFEST_FILE, &outcome)?;
    outcome
}

struct RunOutcome {
    entry: RunEntry,
    error: Option<anyhow::Error>,
}

fn train_all(a: &TrainArgs, data: &Path, manifest: &mut RunManifest) -> anyhow::Result<()> {
    let config = build_config(a)?;
    manifest.config = serde_json::to_value(&config)?;
    if a.repeats == 0 || a.parallel_runs == 0 {
        return Err(UsageError("--repeats and --parallel-runs must be at least 1".into()).into());
    }
    let dataset = parse_dataset(data)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let seeds: Vec<u64> = (0..a.repeats as u64).map(|i| config.seed + i).collect();
    manifest.seeds = seeds.clone();

    let job = |i: usize| {
        let cfg = TrainConfig {
            seed: seeds[i],
            ..config.clone()
        };
        let dir = a.out.join(format!("run-{i}"));
        log::info!("run {i}: seed {} -> {}", cfg.seed, dir.display());
        match a.precision {
            Precision::F32 => run_one::<f32>(&dataset, cfg, &dir, a),
            Precision::F64 => run_one::<f64>(&dataset, cfg, &dir, a),
        }
    };
    let outcomes: Vec<RunOutcome> = if a.parallel_runs > 1 {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new((0..a.repeats).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..a.parallel_runs.min(a.repeats) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= a.repeats {
                        break;
                    }
                    let r = job(i);
                    slots.lock().expect("run slots")[i] = Some(r);
                });
            }
        });
        slots.into_inner().expect("run slots").into_iter().map(|r| r.expect("every run finished")).collect()
    } else {
        (0..a.repeats).map(job).collect()
    };

    let mut first_error = None;
    let mut failed = 0;
    let mut rows: Vec<ReportRow> = Vec::new();
    for o in outcomes {
        rows.extend(o.entry.metrics.iter().cloned());
        manifest.runs.push(o.entry);
        if let Some(e) = o.error {
            failed += 1;
            first_error.get_or_insert(e);
        }
    }
    manifest.summary = summarize(&rows);
    fs::write(a.out.join("summary.csv"), summary_csv(&manifest.summary))?;
    fs::write(a.out.join("summary.json"), serde_json::to_string_pretty(&manifest.summary)? + "\n")?;
    for s in &manifest.summary {
        println!(
            "{:<6} {:<4} {:<6} {:.4} ± {:.4} ({} runs)",
            s.metric, s.space, s.partition, s.mean, s.std, s.runs
        );
    }
    match first_error {
        None => Ok(()),
        Some(e) => Err(e.context(format!("{failed} of {} runs failed", a.repeats))),
    }
}

fn run_one<T: Real>(dataset: &Dataset, cfg: TrainConfig, dir: &Path, a: &TrainArgs) -> RunOutcome {
    let mut entry = RunEntry {
        seed: cfg.seed,
        dir: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        status: "ok".into(),
        error: None,
        metrics: Vec::new(),
    };
    let error = match train_and_report::<T>(dataset, cfg, dir, a, &mut entry.metrics) {
        Ok(()) => None,
        Err(e) => {
            log::error!("{}: {e:#}", dir.display());
            entry.status = "failed".into();
            entry.error = Some(format!("{e:#}"));
            Some(e)
        }
    };
    RunOutcome { entry, error }
}

fn train_and_report<T: Real>(
    dataset: &Dataset,
    cfg: TrainConfig,
    dir: &Path,
    a: &TrainArgs,
    metrics: &mut Vec<ReportRow>,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let start = Instant::now();
    let seed = cfg.seed;
    let mut trainer = Trainer::<T>::new(dataset, cfg)?;
    let result = trainer.run();
    trainer.write_checkpoint(&dir.join(CHECKPOINT_FILE))?;
    let report = result?;
    let timing = !a.no_timing;
    fs::write(dir.join("history.csv"), report.history_csv(timing))?;
    if a.emit_plots {
        write_plots(&report, dir, timing)?;
    }
    if trainer.test_pairs().is_empty() {
        log::warn!("no test pairs, skipping evaluation");
        return Ok(());
    }
    let direction: Direction = a.direction.into();
    let mut rows = Vec::new();
    for space in [MetricSpace::L1, MetricSpace::Csls] {
        let r = trainer.evaluate(space, direction)?;
        let secs = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
        rows.extend(r.rows(seed, secs));
    }
    write_report_files(&rows, &dir.join("report.json"), &dir.join("report.csv"))?;
    *metrics = rows;
    Ok(())
}

/// gnuplot data blocks: loss per epoch, and metrics at evaluated epochs
/// against cumulative seconds.
fn write_plots(report: &TrainReport, dir: &Path, timing: bool) -> anyhow::Result<()> {
    let mut loss = String::from("# epoch loss\n");
    let mut curve = String::from("# epoch seconds mrr hits1 hits10\n");
    let mut elapsed = 0.0;
    for r in &report.history {
        elapsed += if timing { r.seconds } else { 0.0 };
        writeln!(loss, "{} {}", r.epoch, r.loss)?;
        if let (Some(m), Some(h1), Some(h10)) = (r.mrr, r.hits1, r.hits10) {
            writeln!(curve, "{} {} {} {} {}", r.epoch, elapsed, m, h1, h10)?;
        }
    }
    fs::write(dir.join("loss.dat"), loss)?;
    fs::write(dir.join("metrics.dat"), curve)?;
    Ok(())
}
