use super::model::{heads, tails};
use super::{Channels, ConstraintMatrices, RelayNetwork};
use crate::numerics::{hermitian_part, logdet_pd, trace_prod_re, CMat};
use crate::{Error, Result};

/// One-hop interference network equivalent to a relay network at fixed
/// relay matrices.
///
/// `noise_parts[l]` holds the per-cluster contributions to the effective
/// noise followed by the destination noise. `constraint_parts[l]` holds the
/// source penalty followed by the per-cluster penalties seen from source `l`.
#[derive(Debug, Clone)]
pub struct IfnEquivalent {
    pub channels: Vec<Vec<CMat>>,
    pub noise: Vec<CMat>,
    pub noise_parts: Vec<Vec<CMat>>,
    pub constraint: Vec<CMat>,
    pub constraint_parts: Vec<Vec<CMat>>,
    /// `offsets[q][q2]` is the penalty at cluster `q2` caused by noise
    /// injected at cluster `q` (zero for `q2 < q`).
    pub offsets: Vec<Vec<f64>>,
    pub power_offset: f64,
    pub coupling: Vec<Vec<bool>>,
}

impl IfnEquivalent {
    /// Plain one-hop network with no relay terms.
    pub fn one_hop(channels: Vec<Vec<CMat>>, noise: Vec<CMat>, constraint: Vec<CMat>, coupling: Vec<Vec<bool>>) -> Result<Self> {
        let l = noise.len();
        if channels.len() != l || constraint.len() != l || coupling.len() != l {
            return Err(Error::DimensionMismatch("one-hop network tables disagree".into()));
        }
        Ok(Self {
            noise_parts: noise.iter().map(|w| vec![w.clone()]).collect(),
            constraint_parts: constraint.iter().map(|w| vec![w.clone()]).collect(),
            channels,
            noise,
            constraint,
            offsets: vec![],
            power_offset: 0.0,
            coupling,
        })
    }

    pub fn links(&self) -> usize {
        self.noise.len()
    }

    pub fn interferers(&self, l: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.links()).filter(move |&k| self.coupling[l][k])
    }

    /// Links interfered with by link `l` (column of the coupling matrix).
    pub fn victims(&self, l: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.links()).filter(move |&k| self.coupling[k][l])
    }

    pub fn omega(&self, sigma: &[CMat], l: usize) -> CMat {
        let mut om = self.noise[l].clone();
        for k in self.interferers(l) {
            let h = &self.channels[l][k];
            om += h * &sigma[k] * h.adjoint();
        }
        hermitian_part(&om)
    }

    /// Interference-plus-noise plus the link's own signal.
    pub fn total(&self, sigma: &[CMat], omega_l: &CMat, l: usize) -> CMat {
        let h = &self.channels[l][l];
        hermitian_part(&(omega_l + h * &sigma[l] * h.adjoint()))
    }

    pub fn rate(&self, sigma: &[CMat], l: usize) -> Result<f64> {
        let om = self.omega(sigma, l);
        let x = self.total(sigma, &om, l);
        Ok(logdet_pd(&x)? - logdet_pd(&om)?)
    }

    pub fn rates(&self, sigma: &[CMat]) -> Result<Vec<f64>> {
        (0..self.links()).map(|l| self.rate(sigma, l)).collect()
    }

    /// Dual interference-plus-noise `Ŵ'_l + Σ_k φ_{k,l} Ȟ_{k,l}† Σ̂_k Ȟ_{k,l}`
    /// under penalty matrices `penalty`.
    pub fn dual_omega_with(&self, penalty: &[CMat], sigma_hat: &[CMat], l: usize) -> CMat {
        let mut om = penalty[l].clone();
        for k in self.victims(l) {
            let h = &self.channels[k][l];
            om += h.adjoint() * &sigma_hat[k] * h;
        }
        hermitian_part(&om)
    }

    pub fn dual_omega(&self, sigma_hat: &[CMat], l: usize) -> CMat {
        self.dual_omega_with(&self.constraint, sigma_hat, l)
    }

    pub fn dual_rate(&self, sigma_hat: &[CMat], l: usize) -> Result<f64> {
        let om = self.dual_omega(sigma_hat, l);
        let h = &self.channels[l][l];
        let x = hermitian_part(&(&om + h.adjoint() * &sigma_hat[l] * h));
        Ok(logdet_pd(&x)? - logdet_pd(&om)?)
    }

    /// `Σ_l Tr(Σ_l Ŵ'_l)` plus the noise-driven offset.
    pub fn constraint_value(&self, sigma: &[CMat]) -> f64 {
        self.power_offset + (0..self.links()).map(|l| trace_prod_re(&sigma[l], &self.constraint[l])).sum::<f64>()
    }

    /// Dual-side power `Σ_l Tr(Σ̂_l W'_l)`.
    pub fn dual_power(&self, sigma_hat: &[CMat]) -> f64 {
        (0..self.links()).map(|l| trace_prod_re(&sigma_hat[l], &self.noise[l])).sum()
    }
}

/// Reduce a relay network at fixed relay matrices to its one-hop equivalent
/// under the penalty matrices `cm`.
pub fn reduce_to_ifn(net: &RelayNetwork, relays: &[CMat], cm: &ConstraintMatrices) -> Result<IfnEquivalent> {
    cm.validate(net)?;
    if relays.len() != net.hops() || relays.iter().enumerate().any(|(q, f)| f.shape() != (net.relay_antennas(q), net.relay_antennas(q))) {
        return Err(Error::DimensionMismatch("relay matrices do not fit the network".into()));
    }
    let nl = net.links();
    let nq = net.hops();
    let coupling = net.coupling().to_vec();
    if let Channels::Direct(h) = net.channels() {
        let noise = (0..nl).map(|l| net.dest_noise(l).clone()).collect();
        return IfnEquivalent::one_hop(h.clone(), noise, cm.source.clone(), coupling);
    }
    let mut channels = Vec::with_capacity(nl);
    let mut noise = Vec::with_capacity(nl);
    let mut noise_parts = Vec::with_capacity(nl);
    let mut constraint = Vec::with_capacity(nl);
    let mut constraint_parts = Vec::with_capacity(nl);
    for l in 0..nl {
        let t = tails(net, relays, l);
        channels.push((0..nl).map(|k| &t[0] * net.source_channel(k)).collect::<Vec<_>>());
        let mut parts: Vec<CMat> = (0..nq).map(|q| hermitian_part(&(&t[q] * net.relay_noise(q) * t[q].adjoint()))).collect();
        parts.push(net.dest_noise(l).clone());
        noise.push(hermitian_part(&parts.iter().fold(CMat::zeros(net.rx_antennas(l), net.rx_antennas(l)), |a, b| a + b)));
        noise_parts.push(parts);

        let hd = heads(net, relays, l);
        let mut cparts = vec![cm.source[l].clone()];
        for q in 0..nq {
            cparts.push(hermitian_part(&(hd[q].adjoint() * &cm.relay[q] * &hd[q])));
        }
        constraint.push(hermitian_part(&cparts.iter().fold(CMat::zeros(net.tx_antennas(l), net.tx_antennas(l)), |a, b| a + b)));
        constraint_parts.push(cparts);
    }
    let mut offsets = vec![vec![0.0; nq]; nq];
    for q in 0..nq {
        let mut b = relays[q].clone();
        for q2 in q..nq {
            if q2 > q {
                b = &relays[q2] * net.inter_channel(q2 - 1) * b;
            }
            let fwd = &b * net.relay_noise(q) * b.adjoint();
            offsets[q][q2] = trace_prod_re(&fwd, &cm.relay[q2]);
        }
    }
    let power_offset = offsets.iter().flatten().sum();
    Ok(IfnEquivalent { channels, noise, noise_parts, constraint, constraint_parts, offsets, power_offset, coupling })
}
