use super::gradient::Snapshot;
use super::{PrimalOptions, PrimalRun, Recorder, Termination};
use crate::network::{PrecoderState, RelayNetwork};
use crate::numerics::{eigh_desc, hermitian_part, hermitian_sqrt, real, thin_svd, CMat, PSD_FLOOR, RANK_TOL};
use crate::pwf::{single_user_waterfill, LagrangianSpec};
use crate::{Error, Result};

/// True when `coupling` is a strict total order (every pair coupled in
/// exactly one direction, transitively), i.e. a successive decoding order.
pub(crate) fn is_decoding_order(coupling: &[Vec<bool>]) -> bool {
    let n = coupling.len();
    for a in 0..n {
        for b in 0..n {
            if a != b && coupling[a][b] == coupling[b][a] {
                return false;
            }
            for c in 0..n {
                if coupling[a][b] && coupling[b][c] && a != c && !coupling[a][c] {
                    return false;
                }
            }
        }
    }
    true
}

/// Requirements of the two-hop MAC iteration: one single-relay cluster, a
/// common destination channel and noise, unit weights, a successive
/// decoding order and positive definite whitening matrices.
pub fn pwfi_preconditions(net: &RelayNetwork, lag: &LagrangianSpec) -> Result<()> {
    let fail = |m: &str| Err(Error::Precondition(format!("two-hop MAC iteration: {m}")));
    lag.validate(net)?;
    if net.hops() != 1 {
        return fail("network must have exactly one relay cluster");
    }
    if net.partition(0).len() != 1 {
        return fail("relay cluster must be a single relay");
    }
    let l = net.links();
    if (1..l).any(|k| net.dest_channel(k) != net.dest_channel(0) || net.dest_noise(k) != net.dest_noise(0)) {
        return fail("links must share the destination channel and noise");
    }
    if lag.weights.iter().any(|&w| w != 1.0) {
        return fail("weights must all equal 1");
    }
    if !is_decoding_order(net.coupling()) {
        return fail("coupling must be a successive decoding order");
    }
    let pd = |m: &CMat| eigh_desc(m).0.last().map_or(false, |&v| v > 0.0);
    if !pd(net.relay_noise(0)) || lag.penalty.source.iter().any(|m| !pd(m)) {
        return fail("relay noise and source penalties must be positive definite");
    }
    Ok(())
}

fn relay_f(sigma_sq: f64, delta: f64) -> f64 {
    let v = ((delta * delta + 4.0 * delta * sigma_sq).sqrt() - delta - 2.0).max(0.0);
    v / (2.0 * sigma_sq * (delta + 1.0))
}

/// Optimal whitened relay core `U_h D_f U_r†` for the whitened channel `h̄`
/// and whitened received covariance `r̄`.
///
/// The relay matrix is `Ŵ_r^{-1/2} · core · W_r^{-1/2}`.
pub fn optimal_relay_two_hop_mac(h_bar: &CMat, r_bar: &CMat) -> Result<CMat> {
    let n = h_bar.nrows();
    if r_bar.shape() != (n, n) {
        return Err(Error::DimensionMismatch("relay channel and covariance disagree".into()));
    }
    let svd = thin_svd(h_bar, RANK_TOL);
    let (vals, vecs) = eigh_desc(r_bar);
    let top = vals.first().cloned().unwrap_or(0.0);
    let rank_r = vals.iter().filter(|&&v| v > 0.0 && v > RANK_TOL * top).count();
    let m = svd.s.len().min(rank_r);
    let mut core = CMat::zeros(n, n);
    for i in 0..m {
        let f = relay_f(svd.s[i] * svd.s[i], vals[i]);
        if f > 0.0 {
            core += svd.u.column(i) * vecs.column(i).adjoint() * real(f.sqrt());
        }
    }
    Ok(core)
}

/// One PWFI cycle: a water-filling sweep over the links followed by the
/// closed-form relay update. Calls `observe` after each partial update.
pub(crate) fn pwfi_cycle(net: &RelayNetwork, lag: &LagrangianSpec, state: &mut PrecoderState, mut observe: impl FnMut(&PrecoderState) -> Result<()>) -> Result<()> {
    let hm = net.dest_channel(0);
    let wm = net.dest_noise(0);
    let wr = net.relay_noise(0);
    let whr = &lag.penalty.relay[0];
    let nl = net.links();
    for l in 0..nl {
        let f = &state.relays[0];
        let hl = net.source_channel(l);
        let h_bar = hm * f * hl;
        let mut inner = wr.clone();
        for k in (0..nl).filter(|&k| k != l) {
            let hk = net.source_channel(k);
            inner += hk * &state.sigma[k] * hk.adjoint();
        }
        let w_bar = hermitian_part(&(hm * f * inner * f.adjoint() * hm.adjoint() + wm));
        let wh_bar = hermitian_part(&(hl.adjoint() * f.adjoint() * whr * f * hl + &lag.penalty.source[l]));
        state.sigma[l] = single_user_waterfill(&h_bar, &w_bar, &wh_bar)?;
        observe(state)?;
    }
    let mut r = CMat::zeros(wr.nrows(), wr.ncols());
    for l in 0..nl {
        let h = net.source_channel(l);
        r += h * &state.sigma[l] * h.adjoint();
    }
    let (_, wm_is) = hermitian_sqrt(wm, PSD_FLOOR)?;
    let (_, wr_is) = hermitian_sqrt(wr, PSD_FLOOR)?;
    let (_, whr_is) = hermitian_sqrt(whr, PSD_FLOOR)?;
    let h_bar = &whr_is * hm.adjoint() * &wm_is;
    let r_bar = hermitian_part(&(&wr_is * r * &wr_is));
    let core = optimal_relay_two_hop_mac(&h_bar, &r_bar)?;
    state.relays[0] = &whr_is * core * &wr_is;
    observe(state)
}

/// Alternating single-user water-filling and closed-form relay updates for
/// two-hop MAC networks. The Lagrangian never decreases.
pub fn run_pwfi(net: &RelayNetwork, lag: &LagrangianSpec, init: &PrecoderState, opts: &PrimalOptions) -> Result<PrimalRun> {
    opts.validate()?;
    init.validate(net)?;
    pwfi_preconditions(net, lag)?;
    let mut rec = Recorder::new(net, lag, opts);
    let mut residual = rec.record(0, init)?;
    let mut state = init.clone();
    if opts.record_trace {
        rec.substep(Snapshot::unchecked(net, &state, lag)?.lagrangian(&state.sigma, lag));
    }
    if residual <= opts.tolerance {
        return Ok(PrimalRun { state, trace: rec.trace, termination: Termination::Converged, residual });
    }
    for it in 1..=opts.max_iterations {
        let mut subs = Vec::new();
        pwfi_cycle(net, lag, &mut state, |s| {
            if opts.record_trace {
                subs.push(Snapshot::unchecked(net, s, lag)?.lagrangian(&s.sigma, lag));
            }
            Ok(())
        })?;
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


#[cfg(test)]
mod identity_tests {
    use super::tests::random_mac;
    use super::*;
    use crate::algorithms::grad_f;
    use crate::duality::type1_dual_transform;
    use crate::network::{build_dual, dual_constraints};
    use crate::numerics::{cscg_matrix, fro_norm, SplitMix64};

    /// Relay gradient of the dual (BC) network at the Type I image of a MAC
    /// state, next to the MAC relay gradient.
    fn gradients(net: &RelayNetwork, lag: &LagrangianSpec, st: &PrecoderState) -> (CMat, CMat) {
        let bc = build_dual(net, &lag.penalty).unwrap();
        let bc_lag = LagrangianSpec { weights: lag.weights.clone(), penalty: dual_constraints(net) };
        let bc_state = type1_dual_transform(net, st, &lag.penalty).unwrap();
        let g = grad_f(&bc, &bc_state, &bc_lag).unwrap().remove(0);
        let gh = grad_f(net, st, lag).unwrap().remove(0);
        (g, gh)
    }

    #[test]
    fn holds_at_fixed_points() {
        for seed in 0..3 {
            let net = random_mac(900 + seed, 3, 2, 3, 2);
            let lag = LagrangianSpec::uniform(&net, 0.2);
            let init = PrecoderState::isotropic(&net, 1.0, 0.5);
            let run = run_pwfi(&net, &lag, &init, &PrimalOptions { max_iterations: 5000, tolerance: 1e-10, ..Default::default() }).unwrap();
            let (g, gh) = gradients(&net, &lag, &run.state);
            assert!(fro_norm(&(&g - gh.adjoint())) < 1e-6);
        }
    }

    /// Away from a relay optimum the identity is the adjoint, not the
    /// entrywise conjugate.
    #[test]
    fn adjoint_at_covariance_optimal_points() {
        let mut rng = SplitMix64::new(4);
        for seed in 0..3 {
            let net = random_mac(950 + seed, 3, 2, 3, 2);
            let lag = LagrangianSpec::uniform(&net, 0.2);
            let mut st = PrecoderState::isotropic(&net, 1.0, 0.5);
            let f = cscg_matrix(&mut rng, 3, 3, 0.5);
            st.relays[0] = f.clone();
            for _ in 0..3000 {
                pwfi_cycle(&net, &lag, &mut st, |_| Ok(())).unwrap();
                st.relays[0] = f.clone();
            }
            let (g, gh) = gradients(&net, &lag, &st);
            assert!(fro_norm(&g) > 0.1);
            assert!(fro_norm(&(&g - gh.adjoint())) < 1e-9);
            assert!(fro_norm(&(&g - gh.map(|z| z.conj()))) > 1e-3);
        }
    }
}
