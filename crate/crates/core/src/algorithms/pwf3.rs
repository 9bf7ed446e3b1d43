use super::gradient::Snapshot;
use super::pwfi::{is_decoding_order, pwfi_cycle};
use super::{PrimalOptions, PrimalRun, Recorder, Termination};
use crate::duality::type1_dual_transform;
use crate::network::{build_dual, collapse_first_cluster, dual_constraints, PrecoderState, RelayNetwork};
use crate::pwf::LagrangianSpec;
use crate::{Error, Result};

/// Requirements of the three-hop BC iteration: two single-relay clusters, a
/// common source channel and penalty, unit weights and an encoding order.
pub fn pwf3_preconditions(net: &RelayNetwork, lag: &LagrangianSpec) -> Result<()> {
    let fail = |m: &str| Err(Error::Precondition(format!("three-hop BC iteration: {m}")));
    lag.validate(net)?;
    if net.hops() != 2 {
        return fail("network must have exactly two relay clusters");
    }
    if net.partition(0).len() != 1 || net.partition(1).len() != 1 {
        return fail("each cluster must be a single relay");
    }
    let l = net.links();
    if (1..l).any(|k| net.source_channel(k) != net.source_channel(0) || lag.penalty.source[k] != lag.penalty.source[0]) {
        return fail("links must share the source channel and source penalty");
    }
    if lag.weights.iter().any(|&w| w != 1.0) {
        return fail("weights must all equal 1");
    }
    if !is_decoding_order(net.coupling()) {
        return fail("coupling must be a successive encoding order");
    }
    Ok(())
}

fn lagr(net: &RelayNetwork, st: &PrecoderState, lag: &LagrangianSpec) -> Result<f64> {
    Ok(Snapshot::unchecked(net, st, lag)?.lagrangian(&st.sigma, lag))
}

/// One PWF3 cycle. `observe` receives the objective after each of the four
/// steps (dual-side values for steps 2 and 3).
pub(crate) fn pwf3_cycle(net: &RelayNetwork, lag: &LagrangianSpec, state: &mut PrecoderState, mut observe: impl FnMut(f64)) -> Result<()> {
    let w = lag.weights.clone();
    // Step 1: fix F_1, move the remaining two-hop BC to its dual MAC and back.
    let (bc, bc_pen, _) = collapse_first_cluster(net, &lag.penalty, &state.relays[0])?;
    let bc_state = PrecoderState { sigma: state.sigma.clone(), relays: vec![state.relays[1].clone()] };
    let mac = build_dual(&bc, &bc_pen)?;
    let mac_lag = LagrangianSpec { weights: w.clone(), penalty: dual_constraints(&bc) };
    let mut mac_state = type1_dual_transform(&bc, &bc_state, &bc_pen)?;
    pwfi_cycle(&mac, &mac_lag, &mut mac_state, |_| Ok(()))?;
    let back = type1_dual_transform(&mac, &mac_state, &mac_lag.penalty)?;
    state.sigma = back.sigma;
    state.relays[1] = back.relays[0].clone();
    observe(lagr(net, state, lag)?);

    // Step 2: full dual network.
    let dual = build_dual(net, &lag.penalty)?;
    let dual_lag = LagrangianSpec { weights: w.clone(), penalty: dual_constraints(net) };
    let mut dstate = type1_dual_transform(net, state, &lag.penalty)?;
    observe(lagr(&dual, &dstate, &dual_lag)?);

    // Step 3: fix the dual's first relay and run one PWFI cycle on the rest.
    let (dmac, dmac_pen, _) = collapse_first_cluster(&dual, &dual_lag.penalty, &dstate.relays[0])?;
    let dmac_lag = LagrangianSpec { weights: w, penalty: dmac_pen };
    let mut dmac_state = PrecoderState { sigma: dstate.sigma.clone(), relays: vec![dstate.relays[1].clone()] };
    pwfi_cycle(&dmac, &dmac_lag, &mut dmac_state, |_| Ok(()))?;
    dstate.sigma = dmac_state.sigma;
    dstate.relays[1] = dmac_state.relays[0].clone();
    observe(lagr(&dual, &dstate, &dual_lag)?);

    // Step 4: back to the original network.
    *state = type1_dual_transform(&dual, &dstate, &dual_lag.penalty)?;
    observe(lagr(net, state, lag)?);
    Ok(())
}

/// Alternates between the three-hop BC and its dual so that every update
/// is a two-hop MAC problem. The Lagrangian never decreases.
pub fn run_pwf3(net: &RelayNetwork, lag: &LagrangianSpec, init: &PrecoderState, opts: &PrimalOptions) -> Result<PrimalRun> {
    opts.validate()?;
    init.validate(net)?;
    pwf3_preconditions(net, lag)?;
    let mut rec = Recorder::new(net, lag, opts);
    let mut residual = rec.record(0, init)?;
    let mut state = init.clone();
    rec.substep(lagr(net, &state, lag)?);
    if residual <= opts.tolerance {
        return Ok(PrimalRun { state, trace: rec.trace, termination: Termination::Converged, residual });
    }
    for it in 1..=opts.max_iterations {
        let mut subs = Vec::with_capacity(4);
        pwf3_cycle(net, lag, &mut state, |v| subs.push(v))?;
        for v in subs {
            rec.substep(v);
        }
        residual = rec.record(it, &state)?;
        if residual <= opts.tolerance {
            return Ok(PrimalRun { state, trace: rec.trace, termination: Termination::Converged, residual });
        }
    }
    Ok(PrimalRun { state, trace: rec.trace, termination: Termination::MaxIterations, residual })
}
