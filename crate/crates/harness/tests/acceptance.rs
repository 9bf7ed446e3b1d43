//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero when any
//! criterion fails.

mod common;

use afrelay::commands::{gradient_errors, FD_STEP};
use afrelay::report::{BenchReport, RunReport};
use afrelay::scenario::Problem;
use afrelay::{generate_network, run_command, Command, Overrides, Scenario};
use afrelay_core::algorithms::{grad_f, run_pwf, run_pwf3, run_pwfi, PrimalOptions, Termination};
use afrelay_core::duality::{type1_dual_transform, type2_dual_transform};
use afrelay_core::network::{
    build_dual, constraint_value, dual_constraints, link_rates, per_hop_values, reduce_to_ifn, ConstraintMatrices, PrecoderState, RelayNetwork,
};
use afrelay_core::numerics::{fro_norm, scaled_identity, trace_re, SplitMix64};
use afrelay_core::pwf::{dual_covariance_closed_form, dual_pwf_update_link, pwf_update_link, sigma_stationarity_residual, whiten, LagrangianSpec};
use common::{random_constraints, random_network, random_state};
use std::path::Path;
use std::time::Instant;

const TYPE1_TOL: f64 = 1e-9;
const TYPE2_TOL: f64 = 1e-8;
const IFN_CONSTRAINT_TOL: f64 = 1e-10;
const IFN_RATE_TOL: f64 = 1e-12;
const GRADIENT_TOL: f64 = 1e-5;
const SIGMA_STATIONARITY_TOL: f64 = 1e-7;
const PWF_RESIDUAL_TOL: f64 = 1e-5;
const STRUCTURE_TOL: f64 = 1e-8;
const CONJUGATE_TOL: f64 = 1e-6;
const MONOTONE_TOL: f64 = 1e-10;
const LLDM_TOL: f64 = 1e-3;
const LLDM_MAX_OUTER: usize = 200;

type Verdict = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn worst(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

fn verdict(pass: bool, detail: String) -> Verdict {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn type1_duality() -> Result<Verdict, afrelay_core::Error> {
    let (mut shortfall, mut power): (f64, f64) = (f64::NEG_INFINITY, 0.0);
    for i in 0..100u64 {
        let net = random_network(1000 + i, (i % 3) as usize, 3, 4);
        let st = random_state(&net, 2000 + i);
        let cm = random_constraints(&net, 3000 + i);
        let dual = type1_dual_transform(&net, &st, &cm)?;
        let dnet = build_dual(&net, &cm)?;
        let r = link_rates(&net, &st)?;
        let rd = link_rates(&dnet, &dual)?;
        shortfall = shortfall.max(r.iter().zip(&rd).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max));
        power = power.max(rel(constraint_value(&net, &st, &cm)?, constraint_value(&dnet, &dual, &dual_constraints(&net))?));
    }
    Ok(verdict(
        shortfall <= TYPE1_TOL && power <= TYPE1_TOL,
        format!("100 networks, max rate shortfall {shortfall:.2e}, max relative power mismatch {power:.2e}"),
    ))
}

fn type2_scalar_fixture() -> Result<Vec<String>, afrelay_core::Error> {
    let sc = common::scenario("scalar_two_hop.json");
    let net = generate_network(&sc, 0).unwrap();
    let st = PrecoderState { sigma: vec![scaled_identity(1, 2.0)], relays: vec![scaled_identity(1, 1.0)] };
    let t = type2_dual_transform(&net, &st, &ConstraintMatrices::scaled_identity(&net, 1.0))?;
    let want = [[0.5, 1.0], [1.0 / 3.0, 1.0 / 3.0]];
    let mut errs = vec![];
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            if (t.scaling.matrix[(i, j)] - w).abs() > 1e-12 {
                errs.push(format!("A[{i}][{j}] = {}", t.scaling.matrix[(i, j)]));
            }
        }
    }
    if (t.scaling.scales[0] - 2.0).abs() > 1e-12 || (t.scaling.scales[1] - 1.0).abs() > 1e-12 {
        errs.push(format!("scales {:?}", t.scaling.scales.as_slice()));
    }
    let power = trace_re(&t.dual.sigma[0]);
    if (power - 3.0).abs() > 1e-12 {
        errs.push(format!("dual covariance {power}"));
    }
    Ok(errs)
}

fn type2_duality() -> Result<Verdict, afrelay_core::Error> {
    let (mut lm, mut min_scale, mut hop, mut shortfall): (f64, f64, f64, f64) = (0.0, f64::INFINITY, 0.0, f64::NEG_INFINITY);
    for i in 0..50u64 {
        let net = random_network(4000 + i, 1 + (i % 2) as usize, 3, 4);
        let st = random_state(&net, 5000 + i);
        let cm = random_constraints(&net, 6000 + i);
        let t = type2_dual_transform(&net, &st, &cm)?;
        let dnet = build_dual(&net, &cm)?;
        lm = lm.max((t.scaling.lambda_max - 1.0).abs());
        min_scale = min_scale.min(t.scaling.scales.min());
        let fwd = per_hop_values(&net, &st, &cm)?;
        let back = per_hop_values(&dnet, &t.dual, &dual_constraints(&net))?;
        hop = hop.max(worst(fwd.iter().zip(back.iter().rev()).map(|(a, b)| rel(*a, *b))));
        let r = link_rates(&net, &st)?;
        let rd = link_rates(&dnet, &t.dual)?;
        shortfall = shortfall.max(r.iter().zip(&rd).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max));
    }
    let fixture = type2_scalar_fixture()?;
    let pass = lm <= TYPE2_TOL && min_scale > 0.0 && hop <= TYPE2_TOL && shortfall <= TYPE2_TOL && fixture.is_empty();
    let fixture_text = if fixture.is_empty() { "scalar fixture exact".to_string() } else { format!("scalar fixture: {}", fixture.join(", ")) };
    Ok(verdict(
        pass,
        format!(
            "50 networks, |λmax-1| {lm:.2e}, min scale {min_scale:.3e}, hop power mismatch {hop:.2e}, rate shortfall {shortfall:.2e}, {fixture_text}"
        ),
    ))
}

fn network_equivalence() -> Result<Verdict, afrelay_core::Error> {
    let (mut cons, mut rate): (f64, f64) = (0.0, 0.0);
    for i in 0..100u64 {
        let net = random_network(7000 + i, (i % 4) as usize, 3, 4);
        let st = random_state(&net, 8000 + i);
        let cm = random_constraints(&net, 9000 + i);
        let ifn = reduce_to_ifn(&net, &st.relays, &cm)?;
        cons = cons.max(rel(ifn.constraint_value(&st.sigma), constraint_value(&net, &st, &cm)?));
        let r = link_rates(&net, &st)?;
        rate = rate.max(worst(r.iter().zip(ifn.rates(&st.sigma)?).map(|(a, b)| (a - b).abs())));
    }
    Ok(verdict(
        cons < IFN_CONSTRAINT_TOL && rate <= IFN_RATE_TOL,
        format!("100 pairs, constraint identity {cons:.2e}, rate mismatch {rate:.2e}"),
    ))
}

fn gradients() -> Result<Verdict, afrelay_core::Error> {
    let (mut gt, mut gf): (f64, f64) = (0.0, 0.0);
    for i in 0..20u64 {
        let net = random_network(10_000 + i, 1 + (i % 2) as usize, 3, 4);
        let st = random_state(&net, 11_000 + i);
        let mut rng = SplitMix64::new(12_000 + i);
        let weights = (0..net.links()).map(|_| 0.5 + rng.next_f64()).collect();
        let lag = LagrangianSpec::new(&net, weights, random_constraints(&net, 13_000 + i))?;
        let (t, f) = gradient_errors(&net, &st, &lag, FD_STEP)?;
        gt = gt.max(t);
        gf = gf.max(f.unwrap_or(0.0));
    }
    Ok(verdict(
        gt < GRADIENT_TOL && gf < GRADIENT_TOL,
        format!("20 two- and three-hop instances, max relative error grad_T {gt:.2e}, grad_F {gf:.2e}"),
    ))
}

/// Iterates the covariance update with the relays fixed until it stops moving.
fn pwf_fixed_point(net: &RelayNetwork, lag: &LagrangianSpec, st: &mut PrecoderState) -> Result<f64, afrelay_core::Error> {
    let mut change = f64::INFINITY;
    for _ in 0..20_000 {
        change = 0.0;
        for l in 0..net.links() {
            let sh = dual_covariance_closed_form(net, st, lag)?;
            let next = pwf_update_link(net, st, &sh, lag, l)?;
            change = change.max(fro_norm(&(&next - &st.sigma[l])));
            st.sigma[l] = next;
        }
        if change < 1e-14 {
            break;
        }
    }
    Ok(change)
}

fn pwf_structure() -> Result<Verdict, afrelay_core::Error> {
    let (mut stationarity, mut structure, mut moved): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..10u64 {
        let net = random_network(14_000 + i, 1, 3, 3);
        let lag = LagrangianSpec::new(&net, vec![1.0; net.links()], ConstraintMatrices::scaled_identity(&net, 0.3))?;
        let mut st = random_state(&net, 15_000 + i);
        moved = moved.max(pwf_fixed_point(&net, &lag, &mut st)?);
        stationarity = stationarity.max(sigma_stationarity_residual(&net, &st, &lag)?);
        let sh = dual_covariance_closed_form(&net, &st, &lag)?;
        let ifn = reduce_to_ifn(&net, &st.relays, &lag.penalty)?;
        for l in 0..net.links() {
            let omega = ifn.omega(&st.sigma, l);
            let q_hat = whiten(&omega, &sh[l])?;
            let want = whiten(&omega, &dual_pwf_update_link(&net, &st, &sh, &lag, l)?)?;
            structure = structure.max(fro_norm(&(&q_hat - &want)) / fro_norm(&want).max(1.0));
        }
    }
    let mut residual: f64 = 0.0;
    let mut unconverged = 0;
    for i in 0..10u64 {
        let net = random_network(16_000 + i, 1 + (i % 2) as usize, 3, 3);
        let lag = LagrangianSpec::new(&net, vec![1.0; net.links()], ConstraintMatrices::scaled_identity(&net, 0.3))?;
        let init = PrecoderState::isotropic(&net, 1.0, 0.5);
        let run = run_pwf(&net, &lag, &init, &PrimalOptions { max_iterations: 5000, tolerance: 1e-6, record_trace: false, ..Default::default() })?;
        residual = residual.max(run.residual);
        unconverged += usize::from(run.termination != Termination::Converged);
    }
    Ok(verdict(
        stationarity < SIGMA_STATIONARITY_TOL && residual < PWF_RESIDUAL_TOL && structure < STRUCTURE_TOL,
        format!(
            "PWF states: Σ-residual {stationarity:.2e} (last update moved {moved:.1e}), dual structure {structure:.2e}; \
             10 PWF runs: max residual {residual:.2e}, {unconverged} hit the cap"
        ),
    ))
}

fn fixed_point_identity() -> Result<Verdict, afrelay_core::Error> {
    let sc = common::scenario("mac_two_hop.json");
    let (mut conj, mut adj, mut residual): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..10 {
        let net = generate_network(&sc, seed).unwrap();
        let Problem::Inner(lag) = sc.problem(&net).unwrap() else { unreachable!("mac_two_hop is a lagrangian scenario") };
        let init = sc.init_state(&net, seed).unwrap();
        let run = run_pwfi(&net, &lag, &init, &PrimalOptions { max_iterations: 5000, tolerance: 1e-10, record_trace: false, ..Default::default() })?;
        residual = residual.max(run.residual);
        let dual = build_dual(&net, &lag.penalty)?;
        let dual_lag = LagrangianSpec { weights: lag.weights.clone(), penalty: dual_constraints(&net) };
        let dual_state = type1_dual_transform(&net, &run.state, &lag.penalty)?;
        let g = grad_f(&net, &run.state, &lag)?.remove(0);
        let gh = grad_f(&dual, &dual_state, &dual_lag)?.remove(0);
        conj = conj.max(fro_norm(&(&g - gh.map(|z| z.conj()))));
        adj = adj.max(fro_norm(&(&g - gh.adjoint())));
    }
    Ok(verdict(
        conj < CONJUGATE_TOL && adj < CONJUGATE_TOL,
        format!("10 PWFI fixed points (residual ≤ {residual:.1e}): entrywise conjugate gap {conj:.2e}, adjoint gap {adj:.2e}"),
    ))
}

fn monotone(substeps: &[f64]) -> f64 {
    worst(substeps.windows(2).map(|w| w[0] - w[1]))
}

fn monotonicity() -> Result<Verdict, afrelay_core::Error> {
    let mut drops = vec![];
    for (file, algo) in [("mac_two_hop.json", "PWFI"), ("bc_three_hop.json", "PWF3")] {
        let sc = common::scenario(file);
        let mut drop: f64 = 0.0;
        let mut steps = 0;
        for seed in 0..20 {
            let net = generate_network(&sc, seed).unwrap();
            let Problem::Inner(lag) = sc.problem(&net).unwrap() else { unreachable!("lagrangian scenario") };
            let init = sc.init_state(&net, seed).unwrap();
            let opts = PrimalOptions { max_iterations: 300, tolerance: 1e-9, ..Default::default() };
            let run = if algo == "PWFI" { run_pwfi(&net, &lag, &init, &opts)? } else { run_pwf3(&net, &lag, &init, &opts)? };
            drop = drop.max(monotone(&run.trace.substeps));
            steps += run.trace.substeps.len();
        }
        drops.push((algo, drop, steps));
    }
    let pass = drops.iter().all(|d| d.1 <= MONOTONE_TOL);
    let text: Vec<String> = drops.iter().map(|(a, d, n)| format!("{a} largest decrease {d:.2e} over {n} steps")).collect();
    Ok(verdict(pass, format!("20 seeds each: {}", text.join(", "))))
}

fn bench(out: &Path) -> Verdict {
    let mut lines = vec![];
    let mut pass = true;
    for file in ["bmac_two_hop.json", "mac_two_hop.json"] {
        let sc = common::scenario(file);
        let dir = out.join(sc.name());
        let outcome = run_command(&sc, Command::Bench, &Overrides { out: Some(dir.clone()), ..Default::default() }).map_err(|e| e.to_string())?;
        let report: BenchReport = serde_json::from_slice(&std::fs::read(dir.join("bench.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let failures: usize = report.entries.iter().map(|e| e.failures.len()).sum();
        let ordered = report.entries.windows(2).all(|w| w[0].mean_iterations <= w[1].mean_iterations);
        pass &= outcome.passed && ordered && failures == 0 && report.seeds.len() == 20;
        let means: Vec<String> = report.entries.iter().map(|e| format!("{} {:.1}", e.algorithm, e.mean_iterations)).collect();
        lines.push(format!("{}: {}", report.scenario, means.join(" ≤ ")));
    }
    verdict(pass, format!("mean iterations to within 1e-3 over 20 seeds: {}", lines.join("; ")))
}

/// Feasibility violation, complementary slackness, residual and outer
/// iterations of every seed of an LLDM run, recomputed from the report.
fn lldm_checks(sc: &Scenario, report: &RunReport) -> Result<Vec<(u64, f64, f64, f64, usize, bool)>, String> {
    let mut rows = vec![];
    for s in &report.seeds {
        let net = generate_network(sc, s.seed).map_err(|e| e.to_string())?;
        let Problem::Outer(p) = sc.problem(&net).map_err(|e| e.to_string())? else { return Err("expected an outer problem".into()) };
        let state = s.state.to_state()?;
        let slack = p.slack(&net, &state).map_err(|e| e.to_string())?;
        let lambda = s.lambda.clone().ok_or("report lacks multipliers")?;
        let violation = worst(slack.iter().map(|g| -g));
        let cs = worst(slack.iter().zip(&lambda).map(|(g, l)| (g * l).abs()));
        rows.push((s.seed, violation, cs, s.residual, s.iterations, s.converged));
    }
    Ok(rows)
}

fn lldm(out: &Path) -> Verdict {
    let mut lines = vec![];
    let mut pass = true;
    for (file, label) in [("bmac_per_relay.json", "P1 per-relay"), ("mac_rate_floors.json", "P2 rate floors")] {
        let sc = common::scenario(file);
        let dir = out.join(sc.name());
        run_command(&sc, Command::Optimize, &Overrides { out: Some(dir.clone()), ..Default::default() }).map_err(|e| e.to_string())?;
        let report: RunReport = serde_json::from_slice(&std::fs::read(dir.join("report.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let rows = lldm_checks(&sc, &report)?;
        let ok = |r: &(u64, f64, f64, f64, usize, bool)| r.5 && r.1 <= LLDM_TOL && r.2 <= LLDM_TOL && r.3 < LLDM_TOL && r.4 <= LLDM_MAX_OUTER;
        let good = rows.iter().filter(|r| ok(r)).count();
        let bad: Vec<String> = rows.iter().filter(|r| !ok(r)).map(|r| format!("seed {} residual {:.2e}", r.0, r.3)).collect();
        pass &= good == 10 && report.failures.is_empty();
        let max_iter = rows.iter().map(|r| r.4).max().unwrap_or(0);
        let detail = if bad.is_empty() { String::new() } else { format!(" [{}]", bad.join(", ")) };
        lines.push(format!("{label}: {good}/10 seeds meet every bound, max {max_iter} outer iterations{detail}"));
    }
    verdict(pass, lines.join("; "))
}

fn report(n: usize, name: &str, limit: Option<f64>, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = limit.is_none_or(|l| secs < l);
    let (pass, detail) = match v {
        Ok(d) => (in_time, d),
        Err(d) => (false, d),
    };
    let budget = limit.map_or(String::new(), |l| format!(", limit {l:.0} s"));
    println!("{} {n}. {name}: {detail} ({secs:.1} s{budget})", if pass { "PASS" } else { "FAIL" });
    pass
}

fn core(r: Result<Verdict, afrelay_core::Error>) -> Verdict {
    r.unwrap_or_else(|e| Err(format!("error: {e}")))
}

fn main() {
    let out = tempfile::TempDir::new().unwrap();
    let results = [
        report(1, "Type I duality", Some(30.0), || core(type1_duality())),
        report(2, "Type II duality", None, || core(type2_duality())),
        report(3, "network equivalence", None, || core(network_equivalence())),
        report(4, "gradients vs finite differences", Some(60.0), || core(gradients())),
        report(5, "polite water-filling structure", None, || core(pwf_structure())),
        report(6, "gradient identity at fixed points", None, || core(fixed_point_identity())),
        report(7, "monotone PWFI and PWF3", None, || core(monotonicity())),
        report(8, "comparative convergence", None, || bench(out.path())),
        report(9, "LLDM end to end", Some(600.0), || lldm(out.path())),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

