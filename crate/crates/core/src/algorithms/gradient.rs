//! Analytic gradients of the inner-loop Lagrangian.
//!
//! Convention: for a complex matrix variable `Z`, the gradient `∇` satisfies
//! `dL = Re Tr(∇† dZ)`, so `∂L/∂Re Z_ij = Re ∇_ij` and `∂L/∂Im Z_ij = Im ∇_ij`.
//! For hermitian `Σ` the returned matrix `G` satisfies `dL = Tr(G dΣ)`.

use crate::network::{reduce_to_ifn, IfnEquivalent, PrecoderState, RelayNetwork};
use crate::numerics::{block_mask, hermitian_part, inv_pd, logdet_pd, real, CMat};
use crate::pwf::LagrangianSpec;
use crate::Result;

/// Everything the gradients and objective need at one state.
pub(crate) struct Snapshot {
    pub ifn: IfnEquivalent,
    pub omega: Vec<CMat>,
    pub omega_inv: Vec<CMat>,
    pub total_inv: Vec<CMat>,
    pub rates: Vec<f64>,
}

impl Snapshot {
    pub fn new(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec) -> Result<Self> {
        state.validate(net)?;
        lag.validate(net)?;
        Self::unchecked(net, state, lag)
    }

    pub fn unchecked(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec) -> Result<Self> {
        let ifn = reduce_to_ifn(net, &state.relays, &lag.penalty)?;
        Self::from_ifn(ifn, &state.sigma)
    }

    pub fn from_ifn(ifn: IfnEquivalent, sigma: &[CMat]) -> Result<Self> {
        let n = ifn.links();
        let mut omega = Vec::with_capacity(n);
        let mut omega_inv = Vec::with_capacity(n);
        let mut total_inv = Vec::with_capacity(n);
        let mut rates = Vec::with_capacity(n);
        for l in 0..n {
            let om = ifn.omega(sigma, l);
            let x = ifn.total(sigma, &om, l);
            rates.push(logdet_pd(&x)? - logdet_pd(&om)?);
            omega_inv.push(inv_pd(&om)?);
            total_inv.push(inv_pd(&x)?);
            omega.push(om);
        }
        Ok(Self { ifn, omega, omega_inv, total_inv, rates })
    }

    pub fn lagrangian(&self, sigma: &[CMat], lag: &LagrangianSpec) -> f64 {
        let rates: f64 = self.rates.iter().zip(&lag.weights).map(|(r, w)| r * w).sum();
        rates - self.ifn.constraint_value(sigma)
    }

    pub fn closed_form_dual(&self, lag: &LagrangianSpec) -> Vec<CMat> {
        (0..self.ifn.links())
            .map(|l| hermitian_part(&((&self.omega_inv[l] - &self.total_inv[l]) * real(lag.weights[l]))))
            .collect()
    }
}

/// `∇_{Σ_l}` for every link.
pub(crate) fn sigma_gradients(snap: &Snapshot, lag: &LagrangianSpec) -> Vec<CMat> {
    let ifn = &snap.ifn;
    (0..ifn.links())
        .map(|l| {
            let h = &ifn.channels[l][l];
            let mut g = h.adjoint() * &snap.total_inv[l] * h * real(lag.weights[l]);
            for k in ifn.victims(l) {
                let hk = &ifn.channels[k][l];
                g -= hk.adjoint() * (&snap.omega_inv[k] - &snap.total_inv[k]) * hk * real(lag.weights[k]);
            }
            hermitian_part(&(g - &ifn.constraint[l]))
        })
        .collect()
}

/// Block-masked `∇_{F_q}` for every cluster.
pub(crate) fn relay_gradients(net: &RelayNetwork, state: &PrecoderState, snap: &Snapshot, lag: &LagrangianSpec) -> Vec<CMat> {
    let nq = net.hops();
    let nl = net.links();
    if nq == 0 {
        return vec![];
    }
    let f = &state.relays;
    // Per-link signal and accumulated noise covariances at each cluster input.
    let mut sig: Vec<Vec<CMat>> = Vec::with_capacity(nl);
    for k in 0..nl {
        let h = net.source_channel(k);
        let mut s = vec![hermitian_part(&(h * &state.sigma[k] * h.adjoint()))];
        for q in 0..nq - 1 {
            let a = net.inter_channel(q) * &f[q];
            let next = hermitian_part(&(&a * &s[q] * a.adjoint()));
            s.push(next);
        }
        sig.push(s);
    }
    let mut noise = vec![net.relay_noise(0).clone()];
    for q in 0..nq - 1 {
        let a = net.inter_channel(q) * &f[q];
        noise.push(hermitian_part(&(&a * &noise[q] * a.adjoint() + net.relay_noise(q + 1))));
    }
    // Accumulated penalty seen by the output of cluster q.
    let mut k_pen = vec![CMat::zeros(0, 0); nq];
    k_pen[nq - 1] = lag.penalty.relay[nq - 1].clone();
    for q in (0..nq - 1).rev() {
        let a = &f[q + 1] * net.inter_channel(q);
        k_pen[q] = &lag.penalty.relay[q] + a.adjoint() * &k_pen[q + 1] * &a;
    }
    let tails: Vec<Vec<CMat>> = (0..nl).map(|l| crate::network::model_tails(net, f, l)).collect();

    (0..nq)
        .map(|q| {
            let mut y_all = noise[q].clone();
            for k in 0..nl {
                y_all += &sig[k][q];
            }
            let mut g = &k_pen[q] * &f[q] * &y_all * real(-2.0);
            for l in 0..nl {
                if lag.weights[l] == 0.0 {
                    continue;
                }
                let gl = if q + 1 < nq { &tails[l][q + 1] * net.inter_channel(q) } else { net.dest_channel(l).clone() };
                let mut y_om = noise[q].clone();
                for k in snap.ifn.interferers(l) {
                    y_om += &sig[k][q];
                }
                let y_x = &y_om + &sig[l][q];
                let gf = &gl * &f[q];
                let term = &snap.total_inv[l] * &gf * &y_x - &snap.omega_inv[l] * &gf * &y_om;
                g += gl.adjoint() * term * real(2.0 * lag.weights[l]);
            }
            block_mask(&g, net.partition(q))
        })
        .collect()
}

/// `∇_{Σ_l} L` for every link.
pub fn grad_sigma(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec) -> Result<Vec<CMat>> {
    let snap = Snapshot::new(net, state, lag)?;
    Ok(sigma_gradients(&snap, lag))
}

/// `∇_{T_l} L` with `Σ_l = T_l T_l†`.
pub fn grad_t(net: &RelayNetwork, factors: &[CMat], relays: &[CMat], lag: &LagrangianSpec) -> Result<Vec<CMat>> {
    let state = PrecoderState { sigma: factors.iter().map(|t| hermitian_part(&(t * t.adjoint()))).collect(), relays: relays.to_vec() };
    let gs = grad_sigma(net, &state, lag)?;
    Ok(gs.iter().zip(factors).map(|(g, t)| g * t * real(2.0)).collect())
}

/// Block-masked `∇_{F_q} L` for every cluster.
pub fn grad_f(net: &RelayNetwork, state: &PrecoderState, lag: &LagrangianSpec) -> Result<Vec<CMat>> {
    let snap = Snapshot::new(net, state, lag)?;
    Ok(relay_gradients(net, state, &snap, lag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::lagrangian;
    use crate::network::fixtures::random_network;
    use crate::network::{ConstraintMatrices, NetworkParts, RelayCluster};
    use crate::numerics::{cscg_matrix, fro_norm, identity, scaled_identity, SplitMix64, C64};

    fn fd_check_t(net: &RelayNetwork, t: &[CMat], f: &[CMat], lag: &LagrangianSpec) -> f64 {
        let g = grad_t(net, t, f, lag).unwrap();
        let eval = |tt: &[CMat]| {
            let st = PrecoderState { sigma: tt.iter().map(|x| hermitian_part(&(x * x.adjoint()))).collect(), relays: f.to_vec() };
            lagrangian(net, &st, lag).unwrap()
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for l in 0..t.len() {
            let mut fd = CMat::zeros(t[l].nrows(), t[l].ncols());
            for i in 0..t[l].nrows() {
                for j in 0..t[l].ncols() {
                    for (dir, part) in [(C64::new(1.0, 0.0), 0), (C64::new(0.0, 1.0), 1)] {
                        let mut p = t.to_vec();
                        p[l][(i, j)] += dir * h;
                        let mut m = t.to_vec();
                        m[l][(i, j)] -= dir * h;
                        let d = (eval(&p) - eval(&m)) / (2.0 * h);
                        if part == 0 { fd[(i, j)].re = d } else { fd[(i, j)].im = d }
                    }
                }
            }
            worst = worst.max(fro_norm(&(&fd - &g[l])) / fro_norm(&g[l]).max(1e-8));
        }
        worst
    }

    fn fd_check_f(net: &RelayNetwork, st: &PrecoderState, lag: &LagrangianSpec) -> f64 {
        let g = grad_f(net, st, lag).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for q in 0..st.relays.len() {
            let mask = block_mask(&CMat::from_element(st.relays[q].nrows(), st.relays[q].ncols(), C64::new(1.0, 0.0)), net.partition(q));
            let mut fd = CMat::zeros(st.relays[q].nrows(), st.relays[q].ncols());
            for i in 0..fd.nrows() {
                for j in 0..fd.ncols() {
                    if mask[(i, j)].re == 0.0 {
                        continue;
                    }
                    for (dir, part) in [(C64::new(1.0, 0.0), 0), (C64::new(0.0, 1.0), 1)] {
                        let mut p = st.clone();
                        p.relays[q][(i, j)] += dir * h;
                        let mut m = st.clone();
                        m.relays[q][(i, j)] -= dir * h;
                        let d = (lagrangian(net, &p, lag).unwrap() - lagrangian(net, &m, lag).unwrap()) / (2.0 * h);
                        if part == 0 { fd[(i, j)].re = d } else { fd[(i, j)].im = d }
                    }
                }
            }
            worst = worst.max(fro_norm(&(&fd - &g[q])) / fro_norm(&g[q]).max(1e-8));
        }
        worst
    }

    fn random_lag(rng: &mut SplitMix64, net: &RelayNetwork) -> LagrangianSpec {
        let mut pen = ConstraintMatrices::scaled_identity(net, 0.2);
        for m in pen.source.iter_mut().chain(pen.relay.iter_mut()) {
            let a = cscg_matrix(rng, m.nrows(), m.nrows(), 0.1);
            *m += &a * a.adjoint();
        }
        LagrangianSpec { weights: (0..net.links()).map(|_| 0.5 + rng.next_f64()).collect(), penalty: pen }
    }

    #[test]
    fn finite_differences() {
        let mut rng = SplitMix64::new(5);
        for q in [0usize, 1, 2, 3] {
            let net = random_network(200 + q as u64, 2, q, 2);
            let lag = random_lag(&mut rng, &net);
            let t: Vec<CMat> = (0..2).map(|_| cscg_matrix(&mut rng, 2, 2, 1.0)).collect();
            let f: Vec<CMat> = (0..q).map(|_| cscg_matrix(&mut rng, 2, 2, 0.6)).collect();
            assert!(fd_check_t(&net, &t, &f, &lag) < 1e-5);
            let st = PrecoderState { sigma: t.iter().map(|x| x * x.adjoint()).collect(), relays: f };
            if q > 0 {
                assert!(fd_check_f(&net, &st, &lag) < 1e-5, "q = {q}");
            }
        }
    }

    #[test]
    fn block_diagonal_relays() {
        let mut rng = SplitMix64::new(6);
        let mut parts = random_network(300, 2, 2, 2).parts().clone();
        parts.clusters = vec![
            RelayCluster { partition: vec![1, 1], noise: identity(2) },
            RelayCluster { partition: vec![1, 1], noise: scaled_identity(2, 0.5) },
        ];
        let net = NetworkParts { ..parts }.build().unwrap();
        let lag = random_lag(&mut rng, &net);
        let st = PrecoderState {
            sigma: vec![identity(2), scaled_identity(2, 2.0)],
            relays: (0..2).map(|q| block_mask(&cscg_matrix(&mut rng, 2, 2, 1.0), net.partition(q))).collect(),
        };
        assert!(fd_check_f(&net, &st, &lag) < 1e-5);
        let g = grad_f(&net, &st, &lag).unwrap();
        assert_eq!(g[0][(0, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn zero_weight_identity_penalty() {
        let net = random_network(301, 1, 1, 2);
        let lag = LagrangianSpec { weights: vec![0.0], penalty: ConstraintMatrices { source: vec![identity(2)], relay: vec![scaled_identity(2, 1e-300)] } };
        let t = vec![scaled_identity(2, 0.7)];
        let g = grad_t(&net, &t, &[CMat::zeros(2, 2)], &lag).unwrap();
        assert!(fro_norm(&(&g[0] + &t[0] * real(2.0))) < 1e-15);
    }

    #[test]
    fn scalar_optimum_has_zero_gradient() {
        let net = NetworkParts {
            tx_antennas: vec![1],
            rx_antennas: vec![1],
            clusters: vec![],
            channels: crate::network::Channels::Direct(vec![vec![scaled_identity(1, 2.0)]]),
            dest_noise: vec![identity(1)],
            coupling: vec![vec![false]],
            source_groups: None,
            dest_groups: None,
        }
        .build()
        .unwrap();
        let lag = LagrangianSpec::uniform(&net, 1.0);
        let g = grad_t(&net, &[scaled_identity(1, 0.75f64.sqrt())], &[], &lag).unwrap();
        assert!(g[0][(0, 0)].norm() < 1e-10);
    }
}
