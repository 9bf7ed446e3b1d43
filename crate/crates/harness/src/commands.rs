use crate::generate::generate_network;
use crate::report::*;
use crate::scenario::{Problem, ProblemConfig, Scenario};
use crate::HarnessError;
use afrelay_core::algorithms::{grad_f, grad_t, lagrangian, PrimalAlgorithm, Termination};
use afrelay_core::duality::{type1_dual_transform, type2_dual_transform};
use afrelay_core::lldm::{lagrangian_spec_from, run_lldm, LldmTermination, ProblemSpec};
use afrelay_core::network::{
    build_dual, constraint_value, dual_constraints, link_rates, per_hop_values, reduce_to_ifn, PrecoderState, RelayNetwork,
};
use afrelay_core::numerics::{block_mask, fro_norm, hermitian_part, hermitian_sqrt};
use afrelay_core::pwf::LagrangianSpec;
use afrelay_core::{CMat, C64};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Optimize,
    DualityCheck,
    Gradcheck,
    Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Optimize => "optimize",
            Self::DualityCheck => "duality-check",
            Self::Gradcheck => "gradcheck",
            Self::Bench => "bench",
        }
    }
}

/// Command-line values that replace scenario settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub algos: Vec<PrimalAlgorithm>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub artifacts: Vec<PathBuf>,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-5;

pub fn run_command(scenario: &Scenario, cmd: Command, ov: &Overrides) -> Result<Outcome, HarnessError> {
    let sc = apply_overrides(scenario, cmd, ov)?;
    let out = ov
        .out
        .clone()
        .or_else(|| sc.file.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(sc.name()));
    match cmd {
        Command::Optimize => optimize(&sc, &out),
        Command::DualityCheck => duality_check(&sc, &out),
        Command::Gradcheck => gradcheck(&sc, &out, ov.tol.unwrap_or(GRADCHECK_TOL)),
        Command::Bench => bench(&sc, &out),
    }
}

fn apply_overrides(scenario: &Scenario, cmd: Command, ov: &Overrides) -> Result<Scenario, HarnessError> {
    let mut file = scenario.file.clone();
    let outer = !matches!(file.problem, ProblemConfig::Lagrangian { .. });
    if let Some(seeds) = &ov.seeds {
        file.seeds = Some(crate::scenario::SeedSpec::List(seeds.clone()));
    }
    let a = &mut file.algorithm;
    match cmd {
        Command::Bench => {
            if !ov.algos.is_empty() {
                a.bench = ov.algos.iter().map(|x| x.name().to_string()).collect();
            }
            if let Some(t) = ov.tol {
                a.bench_tolerance = t;
            }
            if let Some(m) = ov.max_iter {
                a.max_iterations = Some(m);
            }
        }
        _ => {
            if ov.algos.len() > 1 {
                return Err(HarnessError::Usage(format!("{} takes a single --algo", cmd.name())));
            }
            if let Some(x) = ov.algos.first() {
                a.name = x.name().to_string();
            }
            if cmd == Command::Optimize {
                match (outer, ov.tol, ov.max_iter) {
                    (true, t, m) => {
                        a.lldm.tolerance = t.or(a.lldm.tolerance);
                        a.lldm.max_outer_iterations = m.or(a.lldm.max_outer_iterations);
                    }
                    (false, t, m) => {
                        a.tolerance = t.or(a.tolerance);
                        a.max_iterations = m.or(a.max_iterations);
                    }
                }
            }
        }
    }
    Scenario::from_file(file, scenario.source.as_deref())
}

/// Penalty used by the checks: the Lagrangian's own, or the one induced by
/// unit multipliers.
fn check_penalty(net: &RelayNetwork, problem: &Problem) -> Result<LagrangianSpec, afrelay_core::Error> {
    match problem {
        Problem::Inner(lag) => Ok(lag.clone()),
        Problem::Outer(p) => Ok(lagrangian_spec_from(net, p, &vec![1.0; p.len()])?.0),
    }
}

fn problem_kind(sc: &Scenario) -> &'static str {
    match sc.file.problem {
        ProblemConfig::Lagrangian { .. } => "lagrangian",
        ProblemConfig::P1 { .. } => "p1",
        ProblemConfig::P2 { .. } => "p2",
    }
}

/// Per-seed results in seed order, computed on the worker pool.
fn per_seed<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T, HarnessError> + Sync + Send) -> Vec<(u64, Result<T, HarnessError>)> {
    seeds.par_iter().map(|&s| (s, f(s))).collect()
}

fn failure(seed: u64, e: &HarnessError) -> SeedFailure {
    SeedFailure { seed, error: e.to_string() }
}

/// Rejects configuration errors; solver failures stay per seed.
fn config_error(results: &[(u64, Result<impl Sized, HarnessError>)]) -> Result<(), HarnessError> {
    for (_, r) in results {
        if let Err(e @ (HarnessError::Validation(_) | HarnessError::Usage(_))) = r {
            return Err(HarnessError::Validation(vec![e.to_string()]));
        }
    }
    Ok(())
}

struct SeedRun {
    summary: SeedSummary,
    csv: Vec<u8>,
}

fn optimize_seed(sc: &Scenario, seed: u64) -> Result<SeedRun, HarnessError> {
    let net = generate_network(sc, seed)?;
    let problem = sc.problem(&net)?;
    let init = sc.init_state(&net, seed)?;
    let trace_name = format!("seed-{seed}.csv");
    let start = Instant::now();
    match problem {
        Problem::Inner(lag) => {
            let mut opts = sc.primal_options();
            opts.monitors = vec![lag.penalty.clone()];
            let run = sc.algorithm.run(&net, &lag, &init, &opts)?;
            let wall_time = start.elapsed().as_secs_f64();
            let rows: Vec<TraceRow> = run
                .trace
                .records
                .iter()
                .map(|r| TraceRow {
                    iter: r.iteration,
                    objective: r.objective,
                    grad_norm: r.grad_norm,
                    residual: r.residual,
                    constraints: r.constraints.clone(),
                })
                .collect();
            let summary = SeedSummary {
                seed,
                objective: lagrangian(&net, &run.state, &lag)?,
                rates: link_rates(&net, &run.state)?,
                constraints: vec![constraint_value(&net, &run.state, &lag.penalty)?],
                residual: run.residual,
                iterations: rows.last().map_or(0, |r| r.iter),
                wall_time,
                converged: run.termination == Termination::Converged,
                lambda: None,
                trace: trace_name,
                state: StateRecord::from_state(&run.state),
            };
            Ok(SeedRun { summary, csv: trace_csv(&rows, 1)? })
        }
        Problem::Outer(p) => {
            let run = run_lldm(&net, &p, &init, &sc.lldm_options())?;
            let wall_time = start.elapsed().as_secs_f64();
            let rows: Vec<TraceRow> = run
                .trace
                .iter()
                .map(|r| TraceRow {
                    iter: r.iteration,
                    objective: r.objective,
                    grad_norm: r.slack.iter().map(|g| g * g).sum::<f64>().sqrt(),
                    residual: r.residual,
                    constraints: attained(&p, &r.slack),
                })
                .collect();
            let slack = p.slack(&net, &run.state)?;
            let summary = SeedSummary {
                seed,
                objective: p.objective(&net, &run.state)?,
                rates: link_rates(&net, &run.state)?,
                constraints: attained(&p, &slack),
                residual: run.residual,
                iterations: run.trace.last().map_or(0, |r| r.iteration),
                wall_time,
                converged: run.termination == LldmTermination::Converged,
                lambda: Some(run.lambda.clone()),
                trace: trace_name,
                state: StateRecord::from_state(&run.state),
            };
            Ok(SeedRun { summary, csv: trace_csv(&rows, p.len())? })
        }
    }
}

/// Constraint values from slacks: weighted powers for P1, link rates for P2.
fn attained(p: &ProblemSpec, slack: &[f64]) -> Vec<f64> {
    match p {
        ProblemSpec::P1 { constraints, .. } => constraints.iter().zip(slack).map(|(c, g)| c.budget - g).collect(),
        ProblemSpec::P2 { floors, .. } => floors.iter().zip(slack).map(|(f, g)| f + g).collect(),
    }
}

fn optimize(sc: &Scenario, out: &Path) -> Result<Outcome, HarnessError> {
    let results = per_seed(&sc.seeds(), |s| optimize_seed(sc, s));
    config_error(&results)?;
    let mut seeds = vec![];
    let mut failures = vec![];
    let mut artifacts = vec![];
    for (seed, r) in results {
        match r {
            Ok(run) => {
                let path = out.join(&run.summary.trace);
                write_atomic(&path, &run.csv)?;
                artifacts.push(path);
                seeds.push(run.summary);
            }
            Err(e) => failures.push(failure(seed, &e)),
        }
    }
    let report = RunReport {
        scenario: sc.name().to_string(),
        algorithm: sc.algorithm.name().to_string(),
        problem: problem_kind(sc).to_string(),
        aggregate: Aggregate::of(&seeds),
        seeds,
        failures,
    };
    let path = out.join("report.json");
    write_json(&path, &report)?;
    artifacts.push(path);
    let unconverged = report.seeds.iter().filter(|s| !s.converged).count();
    let mut summary = vec![format!(
        "{}: {} seeds, mean objective {:.6}, mean iterations {:.1}, {} not converged, {} failed",
        report.scenario,
        report.seeds.len(),
        report.aggregate.objective.mean,
        report.aggregate.iterations.mean,
        unconverged,
        report.failures.len()
    )];
    summary.extend(report.failures.iter().map(|f| format!("seed {}: {}", f.seed, f.error)));
    Ok(Outcome { passed: report.failures.is_empty() && unconverged == 0, artifacts, summary })
}

pub const TYPE1_TOL: f64 = 1e-9;
pub const TYPE2_TOL: f64 = 1e-8;
pub const IFN_RATE_TOL: f64 = 1e-12;
pub const IFN_CONSTRAINT_TOL: f64 = 1e-10;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Type I, Type II and network-equivalence certificates at the initial state.
pub fn certify(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec, seed: u64) -> Result<DualityCertificate, afrelay_core::Error> {
    let cm = &lag.penalty;
    let mut checks = vec![];
    let rates = link_rates(net, state)?;
    let power = constraint_value(net, state, cm)?;
    let dnet = build_dual(net, cm)?;
    let dcm = dual_constraints(net);
    let t1 = type1_dual_transform(net, state, cm)?;
    let t1_rates = link_rates(&dnet, &t1)?;
    let t1_power = constraint_value(&dnet, &t1, &dcm)?;
    let shortfall = |d: &[f64]| rates.iter().zip(d).map(|(r, d)| r - d).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::at_most("type1_rate_shortfall", shortfall(&t1_rates), TYPE1_TOL));
    checks.push(Check::at_most("type1_power_mismatch", rel(power, t1_power), TYPE1_TOL));

    let ifn = reduce_to_ifn(net, &state.relays, cm)?;
    let ifn_rates = ifn.rates(&state.sigma)?;
    let worst = rates.iter().zip(&ifn_rates).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    checks.push(Check::at_most("ifn_rate_mismatch", worst, IFN_RATE_TOL));
    checks.push(Check::at_most("ifn_constraint_mismatch", rel(ifn.constraint_value(&state.sigma), power), IFN_CONSTRAINT_TOL));

    let type2 = if net.hops() > 0 {
        let t2 = type2_dual_transform(net, state, cm)?;
        let fwd = per_hop_values(net, state, cm)?;
        let mut back = per_hop_values(&dnet, &t2.dual, &dcm)?;
        back.reverse();
        let t2_rates = link_rates(&dnet, &t2.dual)?;
        let scales: Vec<f64> = t2.scaling.scales.iter().copied().collect();
        let min_scale = scales.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::at_most("type2_lambda_max", (t2.scaling.lambda_max - 1.0).abs(), TYPE2_TOL));
        checks.push(Check { name: "type2_scales_positive".into(), value: min_scale, tolerance: 0.0, pass: min_scale > 0.0 });
        let hop = fwd.iter().zip(&back).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
        checks.push(Check::at_most("type2_hop_power_mismatch", hop, TYPE2_TOL));
        checks.push(Check::at_most("type2_rate_shortfall", shortfall(&t2_rates), TYPE2_TOL));
        back.reverse();
        Some(Type2Certificate {
            rates: t2_rates,
            forward_hop_powers: fwd,
            dual_hop_powers: back,
            lambda_max: t2.scaling.lambda_max,
            scales,
        })
    } else {
        None
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(DualityCertificate {
        seed,
        forward_rates: rates,
        type1_rates: t1_rates,
        forward_power: power,
        type1_power: t1_power,
        type2,
        ifn_rates,
        checks,
        error: None,
        pass,
    })
}

fn failed_certificate(seed: u64, error: String) -> DualityCertificate {
    DualityCertificate {
        seed,
        forward_rates: vec![],
        type1_rates: vec![],
        forward_power: f64::NAN,
        type1_power: f64::NAN,
        type2: None,
        ifn_rates: vec![],
        checks: vec![],
        error: Some(error),
        pass: false,
    }
}

fn duality_check(sc: &Scenario, out: &Path) -> Result<Outcome, HarnessError> {
    let results = per_seed(&sc.seeds(), |seed| {
        let net = generate_network(sc, seed)?;
        let lag = check_penalty(&net, &sc.problem(&net)?)?;
        let init = sc.init_state(&net, seed)?;
        Ok(certify(&net, &init, &lag, seed)?)
    });
    config_error(&results)?;
    let certificates: Vec<DualityCertificate> = results
        .into_iter()
        .map(|(seed, r)| r.unwrap_or_else(|e| failed_certificate(seed, e.to_string())))
        .collect();
    let pass = certificates.iter().all(|c| c.pass);
    let mut summary = vec![];
    for c in &certificates {
        let failed: Vec<String> = c.checks.iter().filter(|k| !k.pass).map(|k| format!("{} = {:e}", k.name, k.value)).collect();
        let lm = c.type2.as_ref().map_or(String::new(), |t| format!(", lambda_max {:.12}", t.lambda_max));
        summary.push(match (&c.error, c.pass) {
            (Some(e), _) => format!("seed {}: FAIL ({e})", c.seed),
            (None, true) => format!("seed {}: pass{lm}", c.seed),
            (None, false) => format!("seed {}: FAIL {}", c.seed, failed.join(", ")),
        });
    }
    let report = DualityReport { scenario: sc.name().to_string(), certificates, pass };
    let path = out.join("certificates.json");
    write_json(&path, &report)?;
    Ok(Outcome { passed: pass, artifacts: vec![path], summary })
}

/// Central differences of `f` along the real and imaginary part of every
/// entry where `mask` is nonzero, assembled as `dRe + i·dIm`.
fn fd_gradient(x: &CMat, mask: &CMat, h: f64, f: impl Fn(&CMat) -> Result<f64, afrelay_core::Error>) -> Result<CMat, afrelay_core::Error> {
    let mut g = CMat::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if mask[(i, j)] == C64::new(0.0, 0.0) {
                continue;
            }
            for dir in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                let mut p = x.clone();
                p[(i, j)] += dir * h;
                let mut m = x.clone();
                m[(i, j)] -= dir * h;
                let d = (f(&p)? - f(&m)?) / (2.0 * h);
                g[(i, j)] += dir * d;
            }
        }
    }
    Ok(g)
}

fn relative_error(fd: &CMat, g: &CMat) -> f64 {
    fro_norm(&(fd - g)) / fro_norm(g).max(1e-8)
}

/// Largest relative errors of the `∇_T` and `∇_F` kernels against central
/// finite differences with step `h`.
pub fn gradient_errors(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec, h: f64) -> Result<(f64, Option<f64>), afrelay_core::Error> {
    let factors: Vec<CMat> = state.sigma.iter().map(|s| hermitian_sqrt(s, 1e-12).map(|r| r.0)).collect::<Result<_, _>>()?;
    let gt = grad_t(net, &factors, &state.relays, lag)?;
    let mut worst_t: f64 = 0.0;
    for l in 0..factors.len() {
        let ones = CMat::from_element(factors[l].nrows(), factors[l].ncols(), C64::new(1.0, 0.0));
        let fd = fd_gradient(&factors[l], &ones, h, |t| {
            let mut st = state.clone();
            st.sigma[l] = hermitian_part(&(t * t.adjoint()));
            lagrangian(net, &st, lag)
        })?;
        worst_t = worst_t.max(relative_error(&fd, &gt[l]));
    }
    if net.hops() == 0 {
        return Ok((worst_t, None));
    }
    let gf = grad_f(net, state, lag)?;
    let mut worst_f: f64 = 0.0;
    for q in 0..net.hops() {
        let f = &state.relays[q];
        let mask = block_mask(&CMat::from_element(f.nrows(), f.ncols(), C64::new(1.0, 0.0)), net.partition(q));
        let fd = fd_gradient(f, &mask, h, |x| {
            let mut st = state.clone();
            st.relays[q] = x.clone();
            lagrangian(net, &st, lag)
        })?;
        worst_f = worst_f.max(relative_error(&fd, &gf[q]));
    }
    Ok((worst_t, Some(worst_f)))
}

fn gradcheck(sc: &Scenario, out: &Path, tol: f64) -> Result<Outcome, HarnessError> {
    let results = per_seed(&sc.seeds(), |seed| {
        let net = generate_network(sc, seed)?;
        let lag = check_penalty(&net, &sc.problem(&net)?)?;
        let init = sc.init_state(&net, seed)?;
        Ok(gradient_errors(&net, &init, &lag, FD_STEP)?)
    });
    config_error(&results)?;
    let entries: Vec<GradcheckEntry> = results
        .into_iter()
        .map(|(seed, r)| match r {
            Ok((t, f)) => GradcheckEntry { seed, grad_t: t, grad_f: f, error: None, pass: t < tol && f.is_none_or(|f| f < tol) },
            Err(e) => GradcheckEntry { seed, grad_t: f64::NAN, grad_f: None, error: Some(e.to_string()), pass: false },
        })
        .collect();
    let max_grad_t = entries.iter().map(|e| e.grad_t).fold(0.0, f64::max);
    let max_grad_f = entries.iter().filter_map(|e| e.grad_f).reduce(f64::max);
    let pass = entries.iter().all(|e| e.pass);
    let report = GradcheckReport { scenario: sc.name().to_string(), step: FD_STEP, tolerance: tol, max_grad_t, max_grad_f, entries, pass };
    let path = out.join("gradcheck.json");
    write_json(&path, &report)?;
    let f_text = max_grad_f.map_or(String::new(), |f| format!(", grad_F {f:.3e}"));
    let summary = vec![format!(
        "{}: max relative error grad_T {max_grad_t:.3e}{f_text} (tolerance {tol:e}): {}",
        report.scenario,
        if pass { "pass" } else { "FAIL" }
    )];
    Ok(Outcome { passed: pass, artifacts: vec![path], summary })
}

fn bench(sc: &Scenario, out: &Path) -> Result<Outcome, HarnessError> {
    if !matches!(sc.file.problem, ProblemConfig::Lagrangian { .. }) {
        return Err(HarnessError::Usage("bench needs a scenario with a lagrangian problem".into()));
    }
    let seeds = sc.seeds();
    let tol = sc.file.algorithm.bench_tolerance;
    let opts = {
        let mut o = sc.primal_options();
        o.record_trace = true;
        o
    };
    let mut entries = vec![];
    for alg in sc.bench_algorithms() {
        let results = per_seed(&seeds, |seed| {
            let net = generate_network(sc, seed)?;
            let Problem::Inner(lag) = sc.problem(&net)? else { unreachable!("checked above") };
            let init = sc.init_state(&net, seed)?;
            let start = Instant::now();
            let run = alg.run(&net, &lag, &init, &opts)?;
            let wall = start.elapsed().as_secs_f64();
            let iters = run.trace.iterations_to_within(tol).unwrap_or(0);
            Ok((iters, wall, run.trace.final_objective().unwrap_or(f64::NAN)))
        });
        config_error(&results)?;
        let mut iterations = vec![];
        let mut walls = vec![];
        let mut objectives = vec![];
        let mut failures = vec![];
        for (seed, r) in results {
            match r {
                Ok((i, w, o)) => {
                    iterations.push(i);
                    walls.push(w);
                    objectives.push(o);
                }
                Err(e) => failures.push(failure(seed, &e)),
            }
        }
        let it = Stat::of(&iterations.iter().map(|&i| i as f64).collect::<Vec<_>>());
        entries.push(BenchEntry {
            algorithm: alg.name().to_string(),
            mean_iterations: it.mean,
            std_iterations: it.std,
            mean_wall_time: Stat::of(&walls).mean,
            mean_objective: Stat::of(&objectives).mean,
            iterations,
            failures,
        });
    }
    let order_holds = entries.windows(2).all(|w| w[0].mean_iterations <= w[1].mean_iterations);
    let ordered = sc.file.algorithm.bench_ordered;
    let report = BenchReport { scenario: sc.name().to_string(), tolerance: tol, seeds, entries, ordered, order_holds };
    let json = out.join("bench.json");
    write_json(&json, &report)?;
    let mut table = csv::Writer::from_writer(vec![]);
    let csv_err = |e: csv::Error| HarnessError::Output("bench.csv".into(), e.to_string());
    table
        .write_record(["algorithm", "mean_iterations", "std_iterations", "mean_wall_time", "mean_objective", "failures"])
        .map_err(csv_err)?;
    let mut summary = vec![];
    for e in &report.entries {
        table
            .write_record([
                e.algorithm.clone(),
                e.mean_iterations.to_string(),
                e.std_iterations.to_string(),
                e.mean_wall_time.to_string(),
                e.mean_objective.to_string(),
                e.failures.len().to_string(),
            ])
            .map_err(csv_err)?;
        summary.push(format!(
            "{:>5}: mean iterations to within {tol:e} {:8.2}, mean wall time {:.4} s, {} failed",
            e.algorithm,
            e.mean_iterations,
            e.mean_wall_time,
            e.failures.len()
        ));
    }
    let csv_path = out.join("bench.csv");
    write_atomic(&csv_path, &table.into_inner().map_err(|e| HarnessError::Output("bench.csv".into(), e.to_string()))?)?;
    if ordered {
        summary.push(format!("ordering {}", if order_holds { "holds" } else { "FAILS" }));
    }
    let failed = report.entries.iter().any(|e| !e.failures.is_empty());
    Ok(Outcome { passed: !failed && (!ordered || order_holds), artifacts: vec![json, csv_path], summary })
}
