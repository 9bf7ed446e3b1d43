use super::ga::ga_loop;
use super::gradient::{relay_gradients, Snapshot};
use super::{armijo, PrimalOptions, PrimalRun, Recorder, Termination};
use crate::network::{PrecoderState, RelayNetwork};
use crate::numerics::{block_mask, fro_norm, real, CMat};
use crate::pwf::{check_dual_omega, pwf_kernel, LagrangianSpec};
use crate::Result;

/// Alternates a polite water-filling sweep over the covariances, an Armijo
/// step on the relay matrices and a dual polite water-filling sweep.
///
/// Falls back to GA (flagged in the trace) when the stationarity residual
/// has not improved for `stall_window` iterations.
pub fn run_pwf(net: &RelayNetwork, lag: &LagrangianSpec, init: &PrecoderState, opts: &PrimalOptions) -> Result<PrimalRun> {
    opts.validate()?;
    init.validate(net)?;
    lag.validate(net)?;
    let mut rec = Recorder::new(net, lag, opts);
    let mut residual = rec.record(0, init)?;
    let mut state = init.clone();
    if residual <= opts.tolerance {
        return Ok(PrimalRun { state, trace: rec.trace, termination: Termination::Converged, residual });
    }
    let mut sigma_hat = Snapshot::unchecked(net, &state, lag)?.closed_form_dual(lag);
    let mut best = residual;
    let mut since_best = 0;
    let nl = net.links();
    for it in 1..=opts.max_iterations {
        // Step 1: covariances by polite water-filling against fixed Ω̂.
        let snap = Snapshot::unchecked(net, &state, lag)?;
        let ifn = &snap.ifn;
        let om_hat: Vec<CMat> = (0..nl).map(|l| ifn.dual_omega(&sigma_hat, l)).collect();
        for l in 0..nl {
            check_dual_omega(&om_hat[l], l)?;
            let om = ifn.omega(&state.sigma, l);
            state.sigma[l] = pwf_kernel(&om, &ifn.channels[l][l], &om_hat[l], lag.weights[l])?.0;
        }
        // Step 2: relay matrices.
        if net.hops() > 0 {
            let snap = Snapshot::unchecked(net, &state, lag)?;
            let base = snap.lagrangian(&state.sigma, lag);
            let gf = relay_gradients(net, &state, &snap, lag);
            let n2: f64 = gf.iter().map(|g| fro_norm(g).powi(2)).sum();
            let accepted = armijo(base, n2, opts, |a| {
                let relays = state
                    .relays
                    .iter()
                    .zip(&gf)
                    .enumerate()
                    .map(|(q, (f, g))| block_mask(&(f + g * real(a)), net.partition(q)))
                    .collect();
                let cand = PrecoderState { sigma: state.sigma.clone(), relays };
                let v = Snapshot::unchecked(net, &cand, lag).ok()?.lagrangian(&cand.sigma, lag);
                Some((v, cand))
            });
            if let Some((_, cand)) = accepted {
                state = cand;
            }
        }
        // Step 3: dual covariances against fixed Ω.
        let snap = Snapshot::unchecked(net, &state, lag)?;
        for l in 0..nl {
            let om_hat = snap.ifn.dual_omega(&sigma_hat, l);
            check_dual_omega(&om_hat, l)?;
            sigma_hat[l] = pwf_kernel(&snap.omega[l], &snap.ifn.channels[l][l], &om_hat, lag.weights[l])?.1;
        }
        residual = rec.record(it, &state)?;
        if residual <= opts.tolerance {
            return Ok(PrimalRun { state, trace: rec.trace, termination: Termination::Converged, residual });
        }
        if residual < best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.stall_window {
                rec.trace.fell_back_to_ga = true;
                let (state, termination, residual) = ga_loop(net, lag, state, opts, &mut rec, it + 1, residual)?;
                return Ok(PrimalRun { state, trace: rec.trace, termination, residual });
            }
        }
    }
    Ok(PrimalRun { state, trace: rec.trace, termination: Termination::MaxIterations, residual })
}
