//! Files written by the commands: per-seed traces, metric CSVs, summaries
//! and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use cbou_core::cbo_loop::{Method, PosteriorDemoResult, Trace};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_VERSION: u32 = 1;

pub const METRICS_HEADER: [&str; 10] = [
    "method",
    "seed",
    "trial",
    "element_mask",
    "value_json",
    "y",
    "y_star",
    "mean_acc",
    "mean_f1",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub package_version: String,
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub resolved_config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Collects written files so the manifest can list their checksums.
pub struct Writer {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Writer {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| {
            CliError::runtime(format!("cannot create output dir {}: {e}", root.display()))
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn finish(
        mut self,
        command: &str,
        config_path: Option<&Path>,
        resolved: serde_json::Value,
        seeds: Vec<u64>,
    ) -> Result<Manifest, CliError> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            manifest_version: MANIFEST_VERSION,
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            resolved_config: resolved,
            seeds,
            output_dir: self.root.clone(),
            artifacts: self.artifacts.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.root.join("manifest.json");
        fs::write(&path, text + "\n")
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}

pub fn trace_file_name(method: Method, seed: u64) -> String {
    format!("traces/{method}-seed{seed}.ndjson")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(traces: &[Trace]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::runtime(format!("csv: {e}"));
    w.write_record(METRICS_HEADER).map_err(err)?;
    for tr in traces {
        for r in &tr.iterations {
            w.write_record([
                tr.header.method.to_string(),
                tr.header.seed.to_string(),
                r.t.to_string(),
                r.element_mask.clone(),
                serde_json::to_string(&r.values).expect("floats serialize"),
                r.y.to_string(),
                r.y_star.to_string(),
                opt(r.mean_acc),
                opt(r.mean_f1),
                r.wall_ms.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.into_inner()
        .map_err(|e| CliError::runtime(format!("csv: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub failed: usize,
    pub y_star_mean: f64,
    pub y_star_std: f64,
    pub y_bar_mean: f64,
    pub y_bar_std: f64,
    pub parent_proportion: f64,
    pub final_mean_acc: Option<f64>,
    pub final_mean_f1: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| mean_std(&v).0)
}

/// Per-method aggregates over seeds, in the order methods first appear.
pub fn summarize(traces: &[Trace]) -> Vec<MethodSummary> {
    let mut methods: Vec<Method> = Vec::new();
    for t in traces {
        if !methods.contains(&t.header.method) {
            methods.push(t.header.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let runs: Vec<&Trace> = traces.iter().filter(|t| t.header.method == m).collect();
            let ys: Vec<f64> = runs.iter().filter_map(|t| t.summary.y_star).collect();
            let yb: Vec<f64> = runs.iter().filter_map(|t| t.summary.y_bar).collect();
            let (y_star_mean, y_star_std) = mean_std(&ys);
            let (y_bar_mean, y_bar_std) = mean_std(&yb);
            MethodSummary {
                method: m,
                runs: runs.len(),
                failed: runs.iter().filter(|t| !t.is_complete()).count(),
                y_star_mean,
                y_star_std,
                y_bar_mean,
                y_bar_std,
                parent_proportion: mean_of(
                    runs.iter().map(|t| t.summary.parent_intervention_proportion),
                )
                .unwrap_or(f64::NAN),
                final_mean_acc: mean_of(runs.iter().map(|t| t.summary.final_mean_acc)),
                final_mean_f1: mean_of(runs.iter().map(|t| t.summary.final_mean_f1)),
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[MethodSummary]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::runtime(format!("csv: {e}"));
    w.write_record([
        "method",
        "runs",
        "failed",
        "y_star_mean",
        "y_star_std",
        "y_bar_mean",
        "y_bar_std",
        "parent_proportion",
        "final_mean_acc",
        "final_mean_f1",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.runs.to_string(),
            r.failed.to_string(),
            r.y_star_mean.to_string(),
            r.y_star_std.to_string(),
            r.y_bar_mean.to_string(),
            r.y_bar_std.to_string(),
            r.parent_proportion.to_string(),
            opt(r.final_mean_acc),
            opt(r.final_mean_f1),
        ])
        .map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::runtime(format!("csv: {e}")))
}

pub fn summary_table(rows: &[MethodSummary]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
    let mut out = format!(
        "{:<10} {:>4} {:>18} {:>18} {:>8} {:>8} {:>8}\n",
        "method", "runs", "Y* mean (std)", "Ybar mean (std)", "pa-prop", "acc", "f1"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:>4} {:>18} {:>18} {:>8.3} {:>8} {:>8}\n",
            r.method.as_str(),
            r.runs,
            format!("{:.4} ({:.4})", r.y_star_mean, r.y_star_std),
            format!("{:.4} ({:.4})", r.y_bar_mean, r.y_bar_std),
            r.parent_proportion,
            fmt(r.final_mean_acc),
            fmt(r.final_mean_f1),
        ));
    }
    out
}

pub fn demo_csv(results: &[PosteriorDemoResult]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::runtime(format!("csv: {e}"));
    w.write_record(["seed", "step", "arm", "mean_acc", "mean_f1"])
        .map_err(err)?;
    for r in results {
        for (arm, acc, f1) in [
            ("obs", &r.obs_accuracy, &r.obs_f1),
            ("int", &r.int_accuracy, &r.int_f1),
        ] {
            for (s, (a, f)) in acc.iter().zip(f1.iter()).enumerate() {
                w.write_record([
                    r.seed.to_string(),
                    s.to_string(),
                    arm.to_string(),
                    a.to_string(),
                    f.to_string(),
                ])
                .map_err(err)?;
            }
        }
    }
    w.into_inner()
        .map_err(|e| CliError::runtime(format!("csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sample_std_uses_n_minus_one() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
