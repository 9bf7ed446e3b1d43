//! Local Lagrange dual method: the outer multiplier loop around a primal
//! inner-loop algorithm.
//!
//! Constraints are normalized to the `g_n ≥ 0` orientation:
//! P1 uses `g_n = δ_n - attained_n`, P2 uses `g_l = I_l - I_l^0`. The dual
//! function `max_{Σ,F} L(Σ, F, λ)` has gradient `g` in `λ`, and the outer loop
//! minimizes it over `λ ≥ 0`.

use crate::algorithms::{lagrangian, PrimalAlgorithm, PrimalOptions};
use crate::network::{constraint_value, link_rates, ConstraintMatrices, PrecoderState, RelayNetwork, WeightedConstraint};
use crate::numerics::{solve_qp_nonneg, trace_re, RMat, RVec};
use crate::pwf::LagrangianSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    /// Maximize `Σ_l μ_l I_l` subject to `attained_n ≤ δ_n` for every
    /// weighted constraint.
    P1 { weights: Vec<f64>, constraints: Vec<WeightedConstraint> },
    /// Minimize a linear cost subject to `I_l ≥ I_l^0`.
    P2 { cost: ConstraintMatrices, floors: Vec<f64> },
}

impl ProblemSpec {
    /// Number of multipliers.
    pub fn len(&self) -> usize {
        match self {
            Self::P1 { constraints, .. } => constraints.len(),
            Self::P2 { floors, .. } => floors.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, net: &RelayNetwork) -> Result<()> {
        match self {
            Self::P1 { weights, constraints } => {
                if weights.len() != net.links() {
                    return Err(Error::DimensionMismatch(format!("{} rate weights for {} links", weights.len(), net.links())));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::Precondition("rate weights must be finite and nonnegative".into()));
                }
                if constraints.is_empty() {
                    return Err(Error::Empty("P1 needs at least one constraint".into()));
                }
                for c in constraints {
                    c.matrices.validate(net)?;
                    if !(c.budget.is_finite() && c.budget >= 0.0) {
                        return Err(Error::Precondition(format!("budget {} is not a nonnegative number", c.budget)));
                    }
                }
            }
            Self::P2 { cost, floors } => {
                cost.validate(net)?;
                if floors.len() != net.links() {
                    return Err(Error::DimensionMismatch(format!("{} rate floors for {} links", floors.len(), net.links())));
                }
                if floors.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
                    return Err(Error::Precondition("rate floors must be finite and nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// Constraint slacks `g_n` (nonnegative when satisfied).
    pub fn slack(&self, net: &RelayNetwork, state: &PrecoderState) -> Result<Vec<f64>> {
        match self {
            Self::P1 { constraints, .. } => constraints
                .iter()
                .map(|c| Ok(c.budget - constraint_value(net, state, &c.matrices)?))
                .collect(),
            Self::P2 { floors, .. } => Ok(link_rates(net, state)?.iter().zip(floors).map(|(r, f)| r - f).collect()),
        }
    }

    /// Value of the problem's own objective (weighted sum-rate for P1, cost
    /// for P2).
    pub fn objective(&self, net: &RelayNetwork, state: &PrecoderState) -> Result<f64> {
        match self {
            Self::P1 { weights, .. } => Ok(link_rates(net, state)?.iter().zip(weights).map(|(r, w)| r * w).sum()),
            Self::P2 { cost, .. } => constraint_value(net, state, cost),
        }
    }

    fn regularization(&self) -> f64 {
        let mats: Vec<&ConstraintMatrices> = match self {
            Self::P1 { constraints, .. } => constraints.iter().map(|c| &c.matrices).collect(),
            Self::P2 { cost, .. } => vec![cost],
        };
        let traces: Vec<f64> = mats
            .iter()
            .flat_map(|m| m.source.iter().chain(&m.relay))
            .filter(|m| m.nrows() > 0)
            .map(|m| trace_re(m) / m.nrows() as f64)
            .collect();
        let mean = if traces.is_empty() { 0.0 } else { traces.iter().sum::<f64>() / traces.len() as f64 };
        1e-8 * (1.0 + mean)
    }
}

/// Inner-loop Lagrangian for fixed multipliers, plus the constant term so
/// that `L(Σ, F, λ) = lagrangian(Σ, F) + offset`.
///
/// Every penalty matrix receives `εI` with `ε = 1e-8 (1 + mean normalized
/// trace)` so the inner problem stays bounded when some multipliers vanish.
pub fn lagrangian_spec_from(net: &RelayNetwork, problem: &ProblemSpec, lambda: &[f64]) -> Result<(LagrangianSpec, f64)> {
    if lambda.len() != problem.len() {
        return Err(Error::DimensionMismatch(format!("{} multipliers for {} constraints", lambda.len(), problem.len())));
    }
    if lambda.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Precondition("multipliers must be finite and nonnegative".into()));
    }
    problem.validate(net)?;
    let eps = problem.regularization();
    let ridge = ConstraintMatrices::scaled_identity(net, 1.0);
    let (weights, penalty, offset) = match problem {
        ProblemSpec::P1 { weights, constraints } => {
            let mut parts: Vec<(f64, &ConstraintMatrices)> = constraints.iter().zip(lambda).map(|(c, &x)| (x, &c.matrices)).collect();
            parts.push((eps, &ridge));
            let offset = constraints.iter().zip(lambda).map(|(c, x)| x * c.budget).sum();
            (weights.clone(), ConstraintMatrices::combine(&parts), offset)
        }
        ProblemSpec::P2 { cost, floors } => {
            let penalty = ConstraintMatrices::combine(&[(1.0, cost), (eps, &ridge)]);
            let offset = -lambda.iter().zip(floors).map(|(x, f)| x * f).sum::<f64>();
            (lambda.to_vec(), penalty, offset)
        }
    };
    Ok((LagrangianSpec::new(net, weights, penalty)?, offset))
}

/// BFGS update of the curvature matrix with `p = Δλ` and `q = Δg`; skipped
/// unless `qᵀp > 0`.
pub fn bfgs_update(j: &RMat, p: &RVec, q: &RVec) -> RMat {
    let qp = q.dot(p);
    let jp = j * p;
    let pjp = p.dot(&jp);
    if !(qp > 0.0) || !(pjp > 0.0) {
        return j.clone();
    }
    let out = j + q * q.transpose() / qp - &jp * jp.transpose() / pjp;
    (&out + out.transpose()) * 0.5
}

/// `max_n |λ_n g_n| + (max_n -g_n)⁺` for slacks in the `g ≥ 0` orientation.
pub fn residual_from_slack(slack: &[f64], lambda: &[f64]) -> f64 {
    let cs = slack.iter().zip(lambda).map(|(g, x)| (g * x).abs()).fold(0.0, f64::max);
    let violation = slack.iter().map(|g| -g).fold(0.0, f64::max);
    cs + violation
}

pub fn residual_error(net: &RelayNetwork, problem: &ProblemSpec, state: &PrecoderState, lambda: &[f64]) -> Result<f64> {
    Ok(residual_from_slack(&problem.slack(net, state)?, lambda))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LldmOptions {
    pub primal: PrimalAlgorithm,
    /// Options for each inner run; the tolerance is overridden per outer
    /// iteration.
    pub inner: PrimalOptions,
    pub tolerance: f64,
    pub max_outer_iterations: usize,
    /// Defaults to all ones.
    pub initial_lambda: Option<Vec<f64>>,
    pub alpha0: f64,
    pub beta: f64,
    pub mt0: u32,
    pub mb_cap: u32,
}

impl Default for LldmOptions {
    fn default() -> Self {
        Self {
            primal: PrimalAlgorithm::Pwf,
            inner: PrimalOptions { record_trace: false, max_iterations: 2000, ..PrimalOptions::default() },
            tolerance: 1e-3,
            max_outer_iterations: 200,
            initial_lambda: None,
            alpha0: 0.25,
            beta: 0.2,
            mt0: 2,
            mb_cap: 30,
        }
    }
}

/// Outer-loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterState {
    pub lambda: RVec,
    pub j: RMat,
    pub alpha: f64,
    pub mt0: u32,
    pub iteration: usize,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iteration: usize,
    pub lambda: Vec<f64>,
    pub slack: Vec<f64>,
    pub residual: f64,
    /// `L(Σ, F, λ)` including the constant offset.
    pub lagrangian: f64,
    pub objective: f64,
    pub step: f64,
    pub inner_iterations: usize,
    /// Smallest eigenvalue of the curvature matrix after the update.
    pub j_min_eig: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LldmTermination {
    Converged,
    /// The returned state is the iterate with the smallest residual error.
    MaxOuterIterations,
}

#[derive(Debug, Clone)]
pub struct LldmRun {
    pub state: PrecoderState,
    pub lambda: Vec<f64>,
    pub residual: f64,
    pub trace: Vec<OuterRecord>,
    pub outer: OuterState,
    pub termination: LldmTermination,
}

struct Point {
    state: PrecoderState,
    slack: Vec<f64>,
    value: f64,
    residual: f64,
    iterations: usize,
}

fn inner_solve(
    net: &RelayNetwork,
    problem: &ProblemSpec,
    opts: &LldmOptions,
    lambda: &[f64],
    warm: &PrecoderState,
    tol: f64,
) -> Result<Point> {
    let (lag, offset) = lagrangian_spec_from(net, problem, lambda)?;
    let inner = PrimalOptions { tolerance: tol, ..opts.inner.clone() };
    let run = opts.primal.run(net, &lag, warm, &inner)?;
    let iterations = run.trace.records.last().map_or(0, |r| r.iteration);
    let slack = problem.slack(net, &run.state)?;
    let value = lagrangian(net, &run.state, &lag)? + offset;
    let residual = residual_from_slack(&slack, lambda);
    Ok(Point { state: run.state, slack, value, residual, iterations })
}

fn min_eig(j: &RMat) -> f64 {
    j.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest `m ≥ 1` (capped) such that the QP direction under `2^m I` has
/// every entry below 0.5 in magnitude.
fn initial_curvature(g: &RVec, lambda: &RVec, cap: u32) -> Result<RMat> {
    let n = g.len();
    let mut j = RMat::identity(n, n) * 2.0;
    for m in 1..=cap.max(1) {
        j = RMat::identity(n, n) * 2f64.powi(m as i32);
        let z = solve_qp_nonneg(g, &j, lambda)?;
        if z.amax() < 0.5 {
            break;
        }
    }
    Ok(j)
}

/// Runs the local Lagrange dual method.
///
/// Each outer iteration solves the direction QP, then tries steps
/// `t = α 2^{-m_t}` for `m_t = 0, 1, ...`, re-solving the inner problem at
/// every trial multiplier (warm-started), until the Lagrangian does not
/// increase, the residual error does not increase, or `m_t = m_t^0`.
pub fn run_lldm(net: &RelayNetwork, problem: &ProblemSpec, init: &PrecoderState, opts: &LldmOptions) -> Result<LldmRun> {
    problem.validate(net)?;
    init.validate(net)?;
    if !(opts.tolerance > 0.0) {
        return Err(Error::Precondition("tolerance must be positive".into()));
    }
    if !(opts.alpha0 > 0.0 && opts.alpha0 <= 0.5 && opts.beta > 0.0 && opts.beta < 1.0) {
        return Err(Error::Precondition("step constants need 0 < α0 ≤ 0.5 and 0 < β < 1".into()));
    }
    let n = problem.len();
    let lambda0 = opts.initial_lambda.clone().unwrap_or_else(|| vec![1.0; n]);
    if lambda0.len() != n {
        return Err(Error::DimensionMismatch(format!("{} initial multipliers for {} constraints", lambda0.len(), n)));
    }
    if lambda0.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::Precondition("initial multipliers must be positive".into()));
    }
    // Stationarity residuals and constraint slacks live on different scales;
    // a factor 0.1 leaves warm starts "converged" and the multipliers stall.
    let inner_tol = |re: f64| (1e-3 * re).max(opts.tolerance * 1e-3).min(1e-4);

    let start_re = residual_from_slack(&problem.slack(net, init)?, &lambda0);
    let mut cur = inner_solve(net, problem, opts, &lambda0, init, inner_tol(start_re))?;
    let mut lambda = RVec::from_vec(lambda0);
    let mut g = RVec::from_vec(cur.slack.clone());
    let j0 = initial_curvature(&g, &lambda, opts.mb_cap)?;
    let mut outer = OuterState {
        lambda: lambda.clone(),
        j: j0,
        alpha: opts.alpha0,
        mt0: opts.mt0,
        iteration: 0,
        residuals: vec![cur.residual],
    };
    let mut trace = vec![OuterRecord {
        iteration: 0,
        lambda: lambda.as_slice().to_vec(),
        slack: cur.slack.clone(),
        residual: cur.residual,
        lagrangian: cur.value,
        objective: problem.objective(net, &cur.state)?,
        step: 0.0,
        inner_iterations: cur.iterations,
        j_min_eig: min_eig(&outer.j),
    }];
    let mut best = (cur.residual, cur.state.clone(), lambda.clone());

    for it in 1..=opts.max_outer_iterations {
        if cur.residual < opts.tolerance {
            break;
        }
        let z = solve_qp_nonneg(&g, &outer.j, &lambda)?;
        let tol = inner_tol(cur.residual);
        let mut accepted = None;
        for mt in 0..=opts.mt0 {
            let t = outer.alpha * 2f64.powi(-(mt as i32));
            let trial: RVec = (&lambda + &z * t).map(|x| x.max(0.0));
            let mut pt = inner_solve(net, problem, opts, trial.as_slice(), &cur.state, tol)?;
            // A switched-off link is a stationary trap for every primal
            // algorithm; a cold start may find a better local maximum.
            if link_rates(net, &pt.state)?.iter().any(|&r| r <= 1e-9) {
                let cold = inner_solve(net, problem, opts, trial.as_slice(), init, tol)?;
                if cold.value > pt.value {
                    pt = cold;
                }
            }
            if pt.value <= cur.value || pt.residual <= cur.residual || mt == opts.mt0 {
                accepted = Some((t, trial, pt));
                break;
            }
        }
        let (t, new_lambda, pt) = accepted.expect("the last trial step is always accepted");
        let new_g = RVec::from_vec(pt.slack.clone());
        let p = &new_lambda - &lambda;
        let q = &new_g - &g;
        outer.j = bfgs_update(&outer.j, &p, &q);
        outer.alpha = (1.0 - opts.beta) * outer.alpha + opts.beta * t;
        outer.iteration = it;
        outer.residuals.push(pt.residual);
        lambda = new_lambda;
        outer.lambda = lambda.clone();
        g = new_g;
        cur = pt;
        trace.push(OuterRecord {
            iteration: it,
            lambda: lambda.as_slice().to_vec(),
            slack: cur.slack.clone(),
            residual: cur.residual,
            lagrangian: cur.value,
            objective: problem.objective(net, &cur.state)?,
            step: t,
            inner_iterations: cur.iterations,
            j_min_eig: min_eig(&outer.j),
        });
        if cur.residual < best.0 {
            best = (cur.residual, cur.state.clone(), lambda.clone());
        }
    }

    if cur.residual < opts.tolerance {
        return Ok(LldmRun {
            state: cur.state,
            lambda: lambda.as_slice().to_vec(),
            residual: cur.residual,
            trace,
            outer,
            termination: LldmTermination::Converged,
        });
    }
    Ok(LldmRun {
        state: best.1,
        lambda: best.2.as_slice().to_vec(),
        residual: best.0,
        trace,
        outer,
        termination: LldmTermination::MaxOuterIterations,
    })
}
