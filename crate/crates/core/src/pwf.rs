//! Polite water-filling: the structure of stationary covariances, the
//! closed-form dual covariances and the single-user water-filling update.

use crate::algorithms::gradient::{relay_gradients, sigma_gradients, Snapshot};
use crate::network::{ConstraintMatrices, PrecoderState, RelayNetwork};
use crate::numerics::{eigh_desc, fro_norm, hermitian_part, hermitian_sqrt, lambda_max, thin_svd, trace_prod_re, CMat, PSD_FLOOR, RANK_TOL};
use crate::{Error, Result};

/// Weights and penalty matrices of the inner-loop Lagrangian
/// `Σ_l w_l I_l - Σ_l Tr(Σ_l Ŵ_0^l) - Σ_q Tr(Σ_q^R Ŵ_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSpec {
    pub weights: Vec<f64>,
    pub penalty: ConstraintMatrices,
}

impl LagrangianSpec {
    pub fn new(net: &RelayNetwork, weights: Vec<f64>, penalty: ConstraintMatrices) -> Result<Self> {
        let s = Self { weights, penalty };
        s.validate(net)?;
        Ok(s)
    }

    /// Unit weights and scaled-identity penalties.
    pub fn uniform(net: &RelayNetwork, penalty_scale: f64) -> Self {
        Self { weights: vec![1.0; net.links()], penalty: ConstraintMatrices::scaled_identity(net, penalty_scale) }
    }

    pub fn validate(&self, net: &RelayNetwork) -> Result<()> {
        if self.weights.len() != net.links() {
            return Err(Error::DimensionMismatch(format!("{} weights for {} links", self.weights.len(), net.links())));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Precondition("weights must be finite and nonnegative".into()));
        }
        self.penalty.validate(net)?;
        for (q, w) in self.penalty.relay.iter().enumerate() {
            let (vals, _) = eigh_desc(w);
            if vals.last().map_or(true, |&v| v <= 0.0) {
                return Err(Error::Precondition(format!("hop penalty {q} is not positive definite")));
            }
        }
        Ok(())
    }
}

/// Shared core of the forward and dual polite water-filling updates.
///
/// With `Ω^{-1/2} H Ω̂^{-1/2} = E Δ G†` and levels `(wI - Δ^{-2})⁺`, returns
/// the forward covariance `Ω̂^{-1/2} G L G† Ω̂^{-1/2}` and the dual covariance
/// `Ω^{-1/2} E L E† Ω^{-1/2}`.
pub(crate) fn pwf_kernel(omega: &CMat, h: &CMat, omega_hat: &CMat, w: f64) -> Result<(CMat, CMat)> {
    let (_, om_is) = hermitian_sqrt(omega, PSD_FLOOR)?;
    let (_, omh_is) = hermitian_sqrt(omega_hat, PSD_FLOOR)?;
    let svd = thin_svd(&(&om_is * h * &omh_is), RANK_TOL);
    let levels: Vec<f64> = svd.s.iter().map(|d| (w - 1.0 / (d * d)).max(0.0)).collect();
    let scale = |u: &CMat| {
        let mut m = u.clone();
        for (j, &lv) in levels.iter().enumerate() {
            m.column_mut(j).scale_mut(lv);
        }
        m * u.adjoint()
    };
    let fwd = hermitian_part(&(&omh_is * scale(&svd.v) * &omh_is));
    let dual = hermitian_part(&(&om_is * scale(&svd.u) * &om_is));
    Ok((fwd, dual))
}

pub(crate) fn check_dual_omega(omega_hat: &CMat, l: usize) -> Result<()> {
    let (vals, _) = eigh_desc(omega_hat);
    if vals.last().map_or(true, |&v| v < 1e-14) {
        return Err(Error::SingularDualOmega(l));
    }
    Ok(())
}

/// `Σ̂_l = w_l (Ω_l^{-1} - X_l^{-1})`.
pub fn dual_covariance_closed_form(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec) -> Result<Vec<CMat>> {
    let snap = Snapshot::new(net, state, lag)?;
    Ok(snap.closed_form_dual(lag))
}

/// Polite water-filling update of link `l` given the dual covariances.
pub fn pwf_update_link(net: &RelayNetwork, state: &PrecoderState, sigma_hat: &[CMat], lag: &LagrangianSpec, l: usize) -> Result<CMat> {
    let snap = Snapshot::new(net, state, lag)?;
    if l >= net.links() || sigma_hat.len() != net.links() {
        return Err(Error::Index(format!("link {l}")));
    }
    let om_hat = snap.ifn.dual_omega(sigma_hat, l);
    check_dual_omega(&om_hat, l)?;
    Ok(pwf_kernel(&snap.omega[l], &snap.ifn.channels[l][l], &om_hat, lag.weights[l])?.0)
}

/// Dual polite water-filling update of link `l`: `Ω_l^{-1/2} E L E† Ω_l^{-1/2}`.
pub fn dual_pwf_update_link(net: &RelayNetwork, state: &PrecoderState, sigma_hat: &[CMat], lag: &LagrangianSpec, l: usize) -> Result<CMat> {
    let snap = Snapshot::new(net, state, lag)?;
    if l >= net.links() || sigma_hat.len() != net.links() {
        return Err(Error::Index(format!("link {l}")));
    }
    let om_hat = snap.ifn.dual_omega(sigma_hat, l);
    check_dual_omega(&om_hat, l)?;
    Ok(pwf_kernel(&snap.omega[l], &snap.ifn.channels[l][l], &om_hat, lag.weights[l])?.1)
}

/// Global maximizer of `log|H Σ H† + W| - Tr(Σ Ŵ)`.
pub fn single_user_waterfill(h: &CMat, w: &CMat, w_hat: &CMat) -> Result<CMat> {
    if w.nrows() != h.nrows() || w_hat.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch("water-filling dimensions".into()));
    }
    check_dual_omega(w_hat, 0)?;
    Ok(pwf_kernel(w, h, w_hat, 1.0)?.0)
}

/// KKT violation of the covariances alone.
pub fn sigma_stationarity_residual(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec) -> Result<f64> {
    let snap = Snapshot::new(net, state, lag)?;
    Ok(sigma_residual(&state.sigma, &sigma_gradients(&snap, lag)))
}

/// KKT violation of the covariances plus the largest per-relay gradient norm.
pub fn stationarity_residual(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec) -> Result<f64> {
    let snap = Snapshot::new(net, state, lag)?;
    Ok(residual_from(net, state, &snap, lag))
}

pub(crate) fn residual_from(net: &RelayNetwork, state: &PrecoderState, snap: &Snapshot, lag: &LagrangianSpec) -> f64 {
    let gs = sigma_gradients(snap, lag);
    let gf = relay_gradients(net, state, snap, lag);
    sigma_residual(&state.sigma, &gs) + relay_residual(net, &gf)
}

pub(crate) fn sigma_residual(sigma: &[CMat], grads: &[CMat]) -> f64 {
    sigma
        .iter()
        .zip(grads)
        .map(|(s, g)| lambda_max(g).max(0.0) + trace_prod_re(s, g).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn relay_residual(net: &RelayNetwork, grads: &[CMat]) -> f64 {
    let mut worst: f64 = 0.0;
    for (q, g) in grads.iter().enumerate() {
        let mut start = 0;
        for &size in net.partition(q) {
            worst = worst.max(fro_norm(&g.view((start, start), (size, size)).into_owned()));
            start += size;
        }
    }
    worst
}

/// `Ω^{1/2} Σ Ω^{1/2}`-style whitening helper: `A^{1/2} M A^{1/2}`.
pub fn whiten(a: &CMat, m: &CMat) -> Result<CMat> {
    let (root, _) = hermitian_sqrt(a, PSD_FLOOR)?;
    Ok(hermitian_part(&(&root * m * &root)))
}
