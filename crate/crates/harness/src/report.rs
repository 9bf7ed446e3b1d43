//! Trace CSV files and JSON reports. Every file is written once through a
//! temporary file in the target directory.

use crate::scenario::MatrixSpec;
use crate::HarnessError;
use afrelay_core::network::PrecoderState;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// One trace row: `iter,objective,grad_norm,residual,c1..cN`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub residual: f64,
    pub constraints: Vec<f64>,
}

pub fn trace_header(constraints: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "objective", "grad_norm", "residual"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=constraints).map(|n| format!("c{n}")));
    h
}

pub fn trace_csv(rows: &[TraceRow], constraints: usize) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(vec![]);
    let err = |e: csv::Error| HarnessError::Output("trace".into(), e.to_string());
    w.write_record(trace_header(constraints)).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.iter.to_string(), r.objective.to_string(), r.grad_norm.to_string(), r.residual.to_string()];
        rec.extend(r.constraints.iter().map(f64::to_string));
        w.write_record(rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| HarnessError::Output("trace".into(), e.to_string()))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>, HarnessError> {
    let err = |e: csv::Error| HarnessError::Io(path.display().to_string(), e.to_string());
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut rows = vec![];
    for rec in r.records() {
        let rec = rec.map_err(err)?;
        let num = |i: usize| -> Result<f64, HarnessError> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| HarnessError::Io(path.display().to_string(), format!("bad field {i}")))
        };
        rows.push(TraceRow {
            iter: num(0)? as usize,
            objective: num(1)?,
            grad_norm: num(2)?,
            residual: num(3)?,
            constraints: (4..rec.len()).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let err = |e: std::io::Error| HarnessError::Output(path.display().to_string(), e.to_string());
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| HarnessError::Output(path.display().to_string(), e.to_string()))?;
    text.push(b'\n');
    write_atomic(path, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub sigma: Vec<MatrixSpec>,
    pub relays: Vec<MatrixSpec>,
}

impl StateRecord {
    pub fn from_state(st: &PrecoderState) -> Self {
        Self {
            sigma: st.sigma.iter().map(MatrixSpec::from_matrix).collect(),
            relays: st.relays.iter().map(MatrixSpec::from_matrix).collect(),
        }
    }

    pub fn to_state(&self) -> Result<PrecoderState, String> {
        let conv = |m: &MatrixSpec| match m {
            MatrixSpec::Rows(r) => m.to_matrix(r.len(), r.first().map_or(0, |x| x.len()), "state"),
            _ => Err("state matrices must be explicit".to_string()),
        };
        Ok(PrecoderState {
            sigma: self.sigma.iter().map(conv).collect::<Result<_, _>>()?,
            relays: self.relays.iter().map(conv).collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub objective: f64,
    pub rates: Vec<f64>,
    /// Monitored constraint values (the `c` columns of the trace).
    pub constraints: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub wall_time: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<Vec<f64>>,
    pub trace: String,
    pub state: StateRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Arithmetic mean and population standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub objective: Stat,
    pub residual: Stat,
    pub iterations: Stat,
    pub wall_time: Stat,
    pub rates: Vec<Stat>,
    pub constraints: Vec<Stat>,
}

impl Aggregate {
    pub fn of(seeds: &[SeedSummary]) -> Self {
        let col = |f: &dyn Fn(&SeedSummary) -> f64| Stat::of(&seeds.iter().map(f).collect::<Vec<_>>());
        let width = |f: &dyn Fn(&SeedSummary) -> usize| seeds.first().map_or(0, f);
        Self {
            objective: col(&|s| s.objective),
            residual: col(&|s| s.residual),
            iterations: col(&|s| s.iterations as f64),
            wall_time: col(&|s| s.wall_time),
            rates: (0..width(&|s| s.rates.len())).map(|i| col(&|s| s.rates[i])).collect(),
            constraints: (0..width(&|s| s.constraints.len())).map(|i| col(&|s| s.constraints[i])).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub algorithm: String,
    /// `lagrangian`, `p1` or `p2`.
    pub problem: String,
    pub seeds: Vec<SeedSummary>,
    pub failures: Vec<SeedFailure>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub algorithm: String,
    pub mean_iterations: f64,
    pub std_iterations: f64,
    pub mean_wall_time: f64,
    pub mean_objective: f64,
    pub iterations: Vec<usize>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scenario: String,
    /// Distance from the final objective defining iterations-to-tolerance.
    pub tolerance: f64,
    pub seeds: Vec<u64>,
    pub entries: Vec<BenchEntry>,
    /// Whether the mean iterations must be non-decreasing in list order.
    pub ordered: bool,
    pub order_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityCertificate {
    pub seed: u64,
    pub forward_rates: Vec<f64>,
    pub type1_rates: Vec<f64>,
    pub forward_power: f64,
    pub type1_power: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub type2: Option<Type2Certificate>,
    pub ifn_rates: Vec<f64>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type2Certificate {
    pub rates: Vec<f64>,
    pub forward_hop_powers: Vec<f64>,
    pub dual_hop_powers: Vec<f64>,
    pub lambda_max: f64,
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckEntry {
    pub seed: u64,
    /// Largest relative error of the `∇_T` kernel over all links.
    pub grad_t: f64,
    /// Largest relative error of the `∇_F` kernel over all clusters.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grad_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub scenario: String,
    pub step: f64,
    pub tolerance: f64,
    pub max_grad_t: f64,
    pub max_grad_f: Option<f64>,
    pub entries: Vec<GradcheckEntry>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub scenario: String,
    pub certificates: Vec<DualityCertificate>,
    pub pass: bool,
}
