use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::error::{CboError, Result};
use crate::parent_posterior::PosteriorSnapshot;
use crate::surrogate::GpHyper;

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialIntervention {
    pub element_mask: String,
    pub values: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub package_version: String,
    pub method: Method,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub scm_name: String,
    pub node_names: Vec<String>,
    pub target: usize,
    pub true_parents_mask: String,
    pub manipulative_mask: String,
    pub domains: Vec<(f64, f64)>,
    /// `(mask, probability)` of the initial parent-set prior.
    pub prior: Vec<(String, f64)>,
    pub initial_interventions: Vec<InitialIntervention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub element_mask: String,
    pub values: Vec<f64>,
    pub y: f64,
    pub y_star: f64,
    pub exploration_set: Vec<String>,
    /// The posterior gave no usable element and the default pool was used.
    pub exploration_set_fallback: bool,
    /// Every candidate had zero expected improvement.
    pub random_fallback: bool,
    pub element_max_ei: Vec<(String, f64)>,
    pub gp_hyper: Vec<(String, GpHyper)>,
    pub posterior: Option<PosteriorSnapshot>,
    pub mean_acc: Option<f64>,
    pub mean_f1: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub trials_completed: usize,
    pub y_star: Option<f64>,
    pub y_bar: Option<f64>,
    pub best_element_mask: Option<String>,
    pub best_values: Option<Vec<f64>>,
    pub parent_intervention_proportion: Option<f64>,
    pub final_mean_acc: Option<f64>,
    pub final_mean_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum Line {
    Header(Box<TraceHeader>),
    Iteration(Box<IterationRecord>),
    Summary(TraceSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub iterations: Vec<IterationRecord>,
    pub summary: TraceSummary,
}

impl Trace {
    pub fn ys(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.y).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.summary.error.is_none()
    }

    /// One JSON object per line: header, iterations, summary.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        let mut push = |l: Line| {
            out.push_str(&serde_json::to_string(&l).expect("trace records serialize"));
            out.push('\n');
        };
        push(Line::Header(Box::new(self.header.clone())));
        for r in &self.iterations {
            push(Line::Iteration(Box::new(r.clone())));
        }
        push(Line::Summary(self.summary.clone()));
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self> {
        let mut header = None;
        let mut iterations = Vec::new();
        let mut summary = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parsed: Line = serde_json::from_str(line)
                .map_err(|e| CboError::Io(format!("trace line {}: {e}", i + 1)))?;
            match parsed {
                Line::Header(h) => header = Some(*h),
                Line::Iteration(r) => iterations.push(*r),
                Line::Summary(s) => summary = Some(s),
            }
        }
        match (header, summary) {
            (Some(header), Some(summary)) => Ok(Trace {
                header,
                iterations,
                summary,
            }),
            _ => Err(CboError::Io("trace lacks a header or summary record".into())),
        }
    }
}
