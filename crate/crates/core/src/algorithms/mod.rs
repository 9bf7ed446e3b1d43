//! Inner-loop primal algorithms: gradient ascent (GA), polite water-filling
//! (PWF), the two-hop MAC variant (PWFI) and the three-hop BC variant (PWF3).

mod ga;
pub mod gradient;
mod pwf3;
mod pwf_alg;
mod pwfi;

pub use ga::run_ga;
pub use gradient::{grad_f, grad_sigma, grad_t};
pub use pwf3::{run_pwf3, pwf3_preconditions};
pub use pwf_alg::run_pwf;
pub use pwfi::{optimal_relay_two_hop_mac, pwfi_preconditions, run_pwfi};

use crate::network::{constraint_value, ConstraintMatrices, PrecoderState, RelayNetwork};
use crate::numerics::{fro_norm, hermitian_sqrt, real, PSD_FLOOR};
use crate::pwf::{relay_residual, sigma_residual, LagrangianSpec};
use crate::{Error, Result};
use gradient::{relay_gradients, sigma_gradients, Snapshot};
use std::time::Instant;

/// `Σ_l w_l I_l - Σ_l Tr(Σ_l Ŵ_0^l) - Σ_q Tr(Σ_q^R Ŵ_q)`.
pub fn lagrangian(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec) -> Result<f64> {
    let snap = Snapshot::new(net, state, lag)?;
    Ok(snap.lagrangian(&state.sigma, lag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalOptions {
    pub max_iterations: usize,
    /// Stop once the stationarity residual falls below this value.
    pub tolerance: f64,
    pub armijo_sigma: f64,
    pub armijo_beta: f64,
    pub initial_step: f64,
    /// PWF falls back to GA after this many iterations without residual
    /// improvement.
    pub stall_window: usize,
    /// When false only the latest record is kept.
    pub record_trace: bool,
    /// Constraint values reported per trace record.
    pub monitors: Vec<ConstraintMatrices>,
}

impl Default for PrimalOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-7,
            armijo_sigma: 0.01,
            armijo_beta: 0.5,
            initial_step: 1.0,
            stall_window: 50,
            record_trace: true,
            monitors: vec![],
        }
    }
}

impl PrimalOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_sigma > 0.0 && self.armijo_sigma <= 0.5) {
            return Err(Error::Precondition("Armijo sigma must lie in (0, 0.5]".into()));
        }
        if !(self.armijo_beta > 0.0 && self.armijo_beta < 1.0) {
            return Err(Error::Precondition("Armijo beta must lie in (0, 1)".into()));
        }
        if !(self.tolerance > 0.0 && self.initial_step > 0.0) {
            return Err(Error::Precondition("tolerance and initial step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    /// Sum of the Frobenius norms of `∇_{T_l}` (with `T_l = Σ_l^{1/2}`) and `∇_{F_q}`.
    pub grad_norm: f64,
    pub residual: f64,
    pub constraints: Vec<f64>,
    /// Seconds since the run started.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    /// Objective after every partial update (link, relay or transform step),
    /// for algorithms that promise monotone progress.
    pub substeps: Vec<f64>,
    pub fell_back_to_ga: bool,
}

impl ConvergenceTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    /// First iteration after which every objective stays within `tol` of the
    /// final objective.
    pub fn iterations_to_within(&self, tol: f64) -> Option<usize> {
        let last = self.final_objective()?;
        let mut answer = self.records.last()?.iteration;
        for r in self.records.iter().rev() {
            if (r.objective - last).abs() > tol {
                break;
            }
            answer = r.iteration;
        }
        Some(answer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct PrimalRun {
    pub state: PrecoderState,
    pub trace: ConvergenceTrace,
    pub termination: Termination,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalAlgorithm {
    Ga,
    Pwf,
    Pwfi,
    Pwf3,
}

impl PrimalAlgorithm {
    pub fn run(self, net: &RelayNetwork, lag: &LagrangianSpec, init: &PrecoderState, opts: &PrimalOptions) -> Result<PrimalRun> {
        match self {
            Self::Ga => run_ga(net, lag, init, opts),
            Self::Pwf => run_pwf(net, lag, init, opts),
            Self::Pwfi => run_pwfi(net, lag, init, opts),
            Self::Pwf3 => run_pwf3(net, lag, init, opts),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ga => "ga",
            Self::Pwf => "pwf",
            Self::Pwfi => "pwfi",
            Self::Pwf3 => "pwf3",
        }
    }
}

impl std::str::FromStr for PrimalAlgorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ga" => Ok(Self::Ga),
            "pwf" => Ok(Self::Pwf),
            "pwfi" => Ok(Self::Pwfi),
            "pwf3" => Ok(Self::Pwf3),
            other => Err(Error::Precondition(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Shared bookkeeping: residual evaluation and trace records.
pub(crate) struct Recorder<'a> {
    net: &'a RelayNetwork,
    lag: &'a LagrangianSpec,
    opts: &'a PrimalOptions,
    start: Instant,
    pub trace: ConvergenceTrace,
}

impl<'a> Recorder<'a> {
    pub fn new(net: &'a RelayNetwork, lag: &'a LagrangianSpec, opts: &'a PrimalOptions) -> Self {
        Self { net, lag, opts, start: Instant::now(), trace: ConvergenceTrace::default() }
    }

    /// Evaluate the state, append a record and return the residual.
    pub fn record(&mut self, iteration: usize, state: &PrecoderState) -> Result<f64> {
        let snap = Snapshot::unchecked(self.net, state, self.lag)?;
        let gs = sigma_gradients(&snap, self.lag);
        let gf = relay_gradients(self.net, state, &snap, self.lag);
        let residual = sigma_residual(&state.sigma, &gs) + relay_residual(self.net, &gf);
        {
            let mut grad_norm: f64 = gf.iter().map(fro_norm).sum();
            for (s, g) in state.sigma.iter().zip(&gs) {
                let (t, _) = hermitian_sqrt(s, PSD_FLOOR)?;
                grad_norm += fro_norm(&(g * t * real(2.0)));
            }
            let constraints = self
                .opts
                .monitors
                .iter()
                .map(|m| constraint_value(self.net, state, m))
                .collect::<Result<Vec<_>>>()?;
            let rec = TraceRecord {
                iteration,
                objective: snap.lagrangian(&state.sigma, self.lag),
                grad_norm,
                residual,
                constraints,
                elapsed: self.start.elapsed().as_secs_f64(),
            };
            if !self.opts.record_trace {
                self.trace.records.clear();
            }
            self.trace.records.push(rec);
        }
        Ok(residual)
    }

    pub fn substep(&mut self, value: f64) {
        if self.opts.record_trace {
            self.trace.substeps.push(value);
        }
    }
}

/// Backtracking Armijo search along a fixed direction: tries
/// `a = s·β^m` for `m = 0, 1, ...` with `s = initial_step` and accepts the
/// first `a` with `eval(a) - base ≥ σ a ‖g‖²`.
pub(crate) fn armijo<T>(base: f64, norm2: f64, opts: &PrimalOptions, mut eval: impl FnMut(f64) -> Option<(f64, T)>) -> Option<(f64, T)> {
    if !(norm2 > 0.0) {
        return None;
    }
    let mut a = opts.initial_step;
    for _ in 0..80 {
        if let Some((v, payload)) = eval(a) {
            if v - base >= opts.armijo_sigma * a * norm2 && v > base {
                return Some((v, payload));
            }
        }
        a *= opts.armijo_beta;
        if a < 1e-300 {
            break;
        }
    }
    None
}
