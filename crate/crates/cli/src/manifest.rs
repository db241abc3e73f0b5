use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tea_core::eval::ReportRow;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Run record name inside forged dataset directories, whose
/// `manifest.json` describes the dataset itself.
pub const FORGE_RUN_FILE: &str = "run.json";

#[derive(Clone, Debug, Serialize)]
pub struct Artifact {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunEntry {
    pub seed: u64,
    pub dir: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: Vec<ReportRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub metric: String,
    pub space: String,
    pub direction: String,
    pub partition: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Record of one invocation, written whether it succeeded or not.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub dataset: String,
    pub dataset_checksums: Vec<Artifact>,
    pub started_unix: Option<f64>,
    pub finished_unix: Option<f64>,
    pub runs: Vec<RunEntry>,
    pub summary: Vec<SummaryRow>,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn new(command: &str, dataset: Option<&Path>, timing: bool) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: "running".into(),
            error: None,
            config: serde_json::Value::Null,
            seeds: Vec::new(),
            dataset: dataset.map(|d| d.display().to_string()).unwrap_or_default(),
            dataset_checksums: dataset.and_then(|d| checksum_dir(d).ok()).unwrap_or_default(),
            started_unix: timing.then(now),
            finished_unix: None,
            runs: Vec::new(),
            summary: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Fills status, end time and artifact checksums, then writes the
    /// record to `dir/file`.
    pub fn finish(&mut self, dir: &Path, file: &str, outcome: &anyhow::Result<()>) -> anyhow::Result<()> {
        match outcome {
            Ok(()) => self.status = "ok".into(),
            Err(e) => {
                self.status = "failed".into();
                self.error = Some(format!("{e:#}"));
            }
        }
        if self.started_unix.is_some() {
            self.finished_unix = Some(now());
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.artifacts = checksum_dir(dir)?
            .into_iter()
            .filter(|a| a.path != file)
            .collect();
        let path = dir.join(file);
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Checksums of every file under `dir`, sorted by relative path. A single
/// file is checksummed on its own.
pub fn checksum_dir(dir: &Path) -> anyhow::Result<Vec<Artifact>> {
    if dir.is_file() {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![Artifact {
            path: name,
            sha256: sha256_file(dir)?,
        }]);
    }
    let mut files = Vec::new();
    walk(dir, &mut files).with_context(|| format!("listing {}", dir.display()))?;
    let mut out: Vec<Artifact> = files
        .iter()
        .map(|f| {
            let rel = f.strip_prefix(dir).unwrap_or(f);
            let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok(Artifact {
                path,
                sha256: sha256_file(f)?,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Groups rows by metric, space, direction and partition, in first-seen order.
pub fn summarize(rows: &[ReportRow]) -> Vec<SummaryRow> {
    let key = |r: &ReportRow| (r.metric.clone(), r.space, r.direction, r.partition);
    let mut keys = Vec::new();
    for r in rows {
        if !keys.contains(&key(r)) {
            keys.push(key(r));
        }
    }
    keys.into_iter()
        .map(|k| {
            let values: Vec<f64> = rows.iter().filter(|r| key(r) == k).map(|r| r.value).collect();
            let (mean, std) = mean_std(&values);
            SummaryRow {
                metric: k.0,
                space: k.1.as_str().to_string(),
                direction: k.2.as_str().to_string(),
                partition: k.3.as_str().to_string(),
                mean,
                std,
                runs: values.len(),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("metric,space,direction,partition,mean,std,runs\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.metric, r.space, r.direction, r.partition, r.mean, r.std, r.runs
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_known_values() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    #[test]
    fn sha256_of_abc() {
        let dir = std::env::temp_dir().join(format!("tea-sha-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let f = dir.join("abc");
        fs::write(&f, "abc").unwrap();
        assert_eq!(
            sha256_file(&f).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        fs::remove_dir_all(dir).unwrap();
    }
}
