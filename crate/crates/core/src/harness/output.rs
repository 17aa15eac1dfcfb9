//! Trace and MSE files as CSV, run summaries as JSON. Output depends only on
//! the values written, so identical inputs give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::montecarlo::{MseCurve, ProtocolOutcome};
use crate::dynamics::Trace;
use crate::equilibrium::{
    ConditionReport, CouplingConstants, GameConstants, GneCheck, MonotonicityProbe, ReferencePoint,
};
use crate::error::{Error, Result};
use crate::schedule::KappaReport;

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn component_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (0..dim).map(|c| format!("{prefix}_{c}")).collect()
    }
}

/// Column names of the trace file.
pub fn trace_header(trace: &Trace) -> Vec<String> {
    let n = trace.n_followers;
    let fdim = trace.final_profile.x.first().map_or(0, |v| v.len());
    let ldim = trace.final_profile.y.len();
    let mut h = vec!["k".to_string()];
    for i in 0..n {
        h.extend(component_names(&format!("x{i}"), fdim));
    }
    h.extend(component_names("y", ldim));
    h.extend((0..n).map(|i| format!("e{i}")));
    h.push("e_leader".into());
    h.extend((0..n).map(|i| format!("alpha{i}")));
    h.push("alpha_leader".into());
    h.extend((0..n).map(|i| format!("inc{i}")));
    h.push("max_staleness".into());
    h.push("distance".into());
    h.push("lyapunov".into());
    h
}

fn optional(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per recorded iteration.
pub fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    w.write_record(trace_header(trace)).map_err(csv_error(path))?;
    for row in &trace.rows {
        let mut rec = vec![row.k.to_string()];
        rec.extend(row.x.iter().flat_map(|v| v.iter().map(f64::to_string)));
        rec.extend(row.y.iter().map(f64::to_string));
        rec.extend(row.event.activity.iter().map(|a| u8::from(*a).to_string()));
        rec.push(u8::from(row.leader_active).to_string());
        rec.extend(row.follower_steps.iter().map(f64::to_string));
        rec.push(row.leader_step.to_string());
        rec.extend(row.increments.iter().map(f64::to_string));
        rec.push(row.max_staleness.to_string());
        rec.push(optional(row.distance));
        rec.push(optional(row.lyapunov));
        w.write_record(&rec).map_err(csv_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

/// `k,mse` for `k = 0..=horizon`.
pub fn write_mse(curve: &MseCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    w.write_record(["k", "mse"]).map_err(csv_error(path))?;
    for (k, v) in curve.mse.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])
            .map_err(csv_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSummary {
    pub x_star: Vec<Vec<f64>>,
    pub y_star: Vec<f64>,
    pub residual: f64,
    pub iterations_used: usize,
    pub verification: Option<GneCheck>,
}

impl ReferenceSummary {
    pub fn new(r: &ReferencePoint, verification: Option<GneCheck>) -> Self {
        Self {
            x_star: r.x_star.iter().map(|v| v.iter().copied().collect()).collect(),
            y_star: r.y_star.iter().copied().collect(),
            residual: r.residual,
            iterations_used: r.iterations_used,
            verification,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsSummary {
    pub coupling: CouplingConstants,
    pub l_bar: f64,
    pub follower_bounds: Vec<f64>,
    pub leader_bound: f64,
    pub diameters: Vec<f64>,
}

impl ConstantsSummary {
    pub fn new(c: &GameConstants) -> Self {
        Self {
            coupling: c.coupling.clone(),
            l_bar: c.l_bar(),
            follower_bounds: (0..c.bounds.followers.len())
                .map(|n| c.bounds.follower_bound(n))
                .collect(),
            leader_bound: c.bounds.leader_bound(),
            diameters: c.bounds.diameters.clone(),
        }
    }
}

/// Everything a run or study reports besides the per-iteration files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub game: String,
    pub seed: u64,
    pub runs: usize,
    pub horizon: usize,
    pub leader_period: usize,
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<KappaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotonicity: Option<MonotonicityProbe>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub protocols: Vec<ProtocolOutcome>,
}

impl Summary {
    pub fn new(game: &str, seed: u64, runs: usize, horizon: usize, leader_period: usize) -> Self {
        Self {
            game: game.to_string(),
            seed,
            runs,
            horizon,
            leader_period,
            threshold: None,
            reference: None,
            constants: None,
            kappa: None,
            conditions: None,
            monotonicity: None,
            protocols: Vec::new(),
        }
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(b"\n").map_err(io_error(path))?;
    w.flush().map_err(io_error(path))
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<()> {
    write_json(summary, path)
}
