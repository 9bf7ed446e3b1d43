use super::gradient::{relay_gradients, sigma_gradients, Snapshot};
use super::{armijo, PrimalOptions, PrimalRun, Recorder, Termination};
use crate::network::{PrecoderState, RelayNetwork};
use crate::numerics::{block_mask, fro_norm, hermitian_part, hermitian_sqrt, real, CMat, PSD_FLOOR};
use crate::pwf::LagrangianSpec;
use crate::Result;

/// Gradient ascent on the factors `T_l` (with `Σ_l = T_l T_l†`) and then on
/// the relay matrices, each with a backtracking Armijo step.
pub fn run_ga(net: &RelayNetwork, lag: &LagrangianSpec, init: &PrecoderState, opts: &PrimalOptions) -> Result<PrimalRun> {
    opts.validate()?;
    init.validate(net)?;
    lag.validate(net)?;
    let mut rec = Recorder::new(net, lag, opts);
    let residual = rec.record(0, init)?;
    let (state, termination, residual) = ga_loop(net, lag, init.clone(), opts, &mut rec, 1, residual)?;
    Ok(PrimalRun { state, trace: rec.trace, termination, residual })
}

fn factor(sigma: &CMat) -> Result<CMat> {
    Ok(hermitian_sqrt(sigma, PSD_FLOOR)?.0)
}

fn norm2(ms: &[CMat]) -> f64 {
    ms.iter().map(|m| fro_norm(m).powi(2)).sum()
}

/// GA iterations starting at `first_iter`; shared with the PWF fallback.
pub(crate) fn ga_loop(
    net: &RelayNetwork,
    lag: &LagrangianSpec,
    mut state: PrecoderState,
    opts: &PrimalOptions,
    rec: &mut Recorder,
    first_iter: usize,
    mut residual: f64,
) -> Result<(PrecoderState, Termination, f64)> {
    if residual <= opts.tolerance {
        return Ok((state, Termination::Converged, residual));
    }
    let mut factors: Vec<CMat> = state.sigma.iter().map(factor).collect::<Result<_>>()?;
    for it in first_iter..=opts.max_iterations {
        // Covariance factors.
        let snap = Snapshot::unchecked(net, &state, lag)?;
        let base = snap.lagrangian(&state.sigma, lag);
        let gt: Vec<CMat> = sigma_gradients(&snap, lag).iter().zip(&factors).map(|(g, t)| g * t * real(2.0)).collect();
        let accepted = armijo(base, norm2(&gt), opts, |a| {
            let t: Vec<CMat> = factors.iter().zip(&gt).map(|(t, g)| t + g * real(a)).collect();
            let cand = PrecoderState { sigma: t.iter().map(|x| hermitian_part(&(x * x.adjoint()))).collect(), relays: state.relays.clone() };
            let v = Snapshot::unchecked(net, &cand, lag).ok()?.lagrangian(&cand.sigma, lag);
            Some((v, (t, cand)))
        });
        if let Some((_, (t, cand))) = accepted {
            factors = t;
            state = cand;
        }
        // Relay matrices.
        if net.hops() > 0 {
            let snap = Snapshot::unchecked(net, &state, lag)?;
            let base = snap.lagrangian(&state.sigma, lag);
            let gf = relay_gradients(net, &state, &snap, lag);
            let accepted = armijo(base, norm2(&gf), opts, |a| {
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
        residual = rec.record(it, &state)?;
        if residual <= opts.tolerance {
            return Ok((state, Termination::Converged, residual));
        }
    }
    Ok((state, Termination::MaxIterations, residual))
}
