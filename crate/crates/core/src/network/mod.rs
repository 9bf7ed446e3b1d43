//! Multi-hop AF relay network model.
//!
//! Indices are 0-based throughout: links `0..L`, relay clusters `0..Q`.
//! `Relayed::inter[q]` carries cluster `q` to cluster `q + 1`.

mod collapse;
mod constraints;
mod dual;
mod ifn;
mod model;
pub(crate) use model::tails as model_tails;

pub use constraints::{
    constraint_value, eval_constraints, per_hop_values, ConstraintMatrices, LinearConstraintSpec,
    WeightedConstraint,
};
pub use collapse::collapse_first_cluster;
pub use dual::{build_dual, dual_constraints, dual_relays};
pub use ifn::{reduce_to_ifn, IfnEquivalent};
pub use model::{
    cascade, effective_channel, effective_noise, interference_plus_noise, link_rate, link_rates,
    relay_tx_covariance, relay_tx_covariances,
};

use crate::numerics::{block_mask, check_finite, hermitian, logdet_pd, psd, CMat};
use crate::{Error, Result};

/// One relay cluster: the antenna partition over its relays and the noise
/// covariance at the cluster input.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayCluster {
    pub partition: Vec<usize>,
    pub noise: CMat,
}

impl RelayCluster {
    pub fn antennas(&self) -> usize {
        self.partition.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Channels {
    /// Network without relays; `[l][k]` maps the transmitter of link `k` to
    /// the receiver of link `l`.
    Direct(Vec<Vec<CMat>>),
    Relayed {
        source: Vec<CMat>,
        inter: Vec<CMat>,
        destination: Vec<CMat>,
    },
}

/// Raw ingredients of a network; call [`NetworkParts::build`] to validate.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParts {
    pub tx_antennas: Vec<usize>,
    pub rx_antennas: Vec<usize>,
    pub clusters: Vec<RelayCluster>,
    pub channels: Channels,
    pub dest_noise: Vec<CMat>,
    /// `coupling[l][k]`: link `k` interferes with link `l`.
    pub coupling: Vec<Vec<bool>>,
    /// Links with equal group index share a physical transmitter.
    pub source_groups: Option<Vec<usize>>,
    /// Links with equal group index share a physical receiver.
    pub dest_groups: Option<Vec<usize>>,
}

impl NetworkParts {
    pub fn build(self) -> Result<RelayNetwork> {
        RelayNetwork::new(self)
    }
}

/// A validated relay network. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayNetwork {
    parts: NetworkParts,
    source_groups: Vec<usize>,
    dest_groups: Vec<usize>,
}

impl RelayNetwork {
    pub fn new(parts: NetworkParts) -> Result<Self> {
        let problems = validate(&parts);
        if !problems.is_empty() {
            return Err(Error::InvalidNetwork(problems));
        }
        let l = parts.tx_antennas.len();
        let mut parts = parts;
        for c in &mut parts.clusters {
            c.noise = hermitian(&c.noise)?;
        }
        for w in &mut parts.dest_noise {
            *w = hermitian(w)?;
        }
        let source_groups = parts.source_groups.clone().unwrap_or_else(|| (0..l).collect());
        let dest_groups = parts.dest_groups.clone().unwrap_or_else(|| (0..l).collect());
        Ok(Self { parts, source_groups, dest_groups })
    }

    pub fn parts(&self) -> &NetworkParts {
        &self.parts
    }

    pub fn links(&self) -> usize {
        self.parts.tx_antennas.len()
    }

    /// Number of relay clusters `Q`.
    pub fn hops(&self) -> usize {
        self.parts.clusters.len()
    }

    pub fn tx_antennas(&self, l: usize) -> usize {
        self.parts.tx_antennas[l]
    }

    pub fn rx_antennas(&self, l: usize) -> usize {
        self.parts.rx_antennas[l]
    }

    pub fn relay_antennas(&self, q: usize) -> usize {
        self.parts.clusters[q].antennas()
    }

    pub fn partition(&self, q: usize) -> &[usize] {
        &self.parts.clusters[q].partition
    }

    pub fn relay_noise(&self, q: usize) -> &CMat {
        &self.parts.clusters[q].noise
    }

    pub fn dest_noise(&self, l: usize) -> &CMat {
        &self.parts.dest_noise[l]
    }

    pub fn phi(&self, l: usize, k: usize) -> bool {
        self.parts.coupling[l][k]
    }

    pub fn coupling(&self) -> &[Vec<bool>] {
        &self.parts.coupling
    }

    pub fn channels(&self) -> &Channels {
        &self.parts.channels
    }

    pub fn source_group(&self, l: usize) -> usize {
        self.source_groups[l]
    }

    pub fn dest_group(&self, l: usize) -> usize {
        self.dest_groups[l]
    }

    pub fn source_groups(&self) -> &[usize] {
        &self.source_groups
    }

    pub fn dest_groups(&self) -> &[usize] {
        &self.dest_groups
    }

    /// `H_0^l`. Panics on a network without relays.
    pub fn source_channel(&self, l: usize) -> &CMat {
        match &self.parts.channels {
            Channels::Relayed { source, .. } => &source[l],
            Channels::Direct(_) => panic!("network has no relay clusters"),
        }
    }

    /// Channel from cluster `q` to cluster `q + 1`.
    pub fn inter_channel(&self, q: usize) -> &CMat {
        match &self.parts.channels {
            Channels::Relayed { inter, .. } => &inter[q],
            Channels::Direct(_) => panic!("network has no relay clusters"),
        }
    }

    /// `H_Q^l`. Panics on a network without relays.
    pub fn dest_channel(&self, l: usize) -> &CMat {
        match &self.parts.channels {
            Channels::Relayed { destination, .. } => &destination[l],
            Channels::Direct(_) => panic!("network has no relay clusters"),
        }
    }

    /// Interferers of link `l` (coupling row).
    pub fn interferers(&self, l: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.links()).filter(move |&k| self.parts.coupling[l][k])
    }
}

fn validate(p: &NetworkParts) -> Vec<String> {
    let mut errs = Vec::new();
    let l = p.tx_antennas.len();
    if l == 0 {
        errs.push("network has no links".into());
        return errs;
    }
    if p.rx_antennas.len() != l {
        errs.push(format!("{} receive antenna counts for {l} links", p.rx_antennas.len()));
        return errs;
    }
    for (i, (&t, &r)) in p.tx_antennas.iter().zip(&p.rx_antennas).enumerate() {
        if t == 0 || r == 0 {
            errs.push(format!("link {i} has zero antennas"));
        }
    }
    if p.dest_noise.len() != l {
        errs.push(format!("{} destination noises for {l} links", p.dest_noise.len()));
    } else {
        for (i, w) in p.dest_noise.iter().enumerate() {
            if w.shape() != (p.rx_antennas[i], p.rx_antennas[i]) {
                errs.push(format!("destination noise {i} has shape {:?}", w.shape()));
            } else if let Err(e) = psd(w) {
                errs.push(format!("destination noise {i}: {e}"));
            } else if logdet_pd(w).is_err() {
                errs.push(format!("destination noise {i} is singular"));
            }
        }
    }
    if p.coupling.len() != l || p.coupling.iter().any(|r| r.len() != l) {
        errs.push(format!("coupling matrix must be {l}x{l}"));
    } else {
        for i in 0..l {
            if p.coupling[i][i] {
                errs.push(format!("Phi[{i}][{i}] must be zero (link {i} couples to itself)"));
            }
        }
    }
    for (q, c) in p.clusters.iter().enumerate() {
        if c.partition.is_empty() || c.partition.iter().any(|&n| n == 0) {
            errs.push(format!("cluster {q} has an empty relay"));
            continue;
        }
        let n = c.antennas();
        if c.noise.shape() != (n, n) {
            errs.push(format!("cluster {q} noise has shape {:?}, expected {n}x{n}", c.noise.shape()));
        } else if let Err(e) = psd(&c.noise) {
            errs.push(format!("cluster {q} noise: {e}"));
        }
    }
    let groups_ok = |g: &Option<Vec<usize>>, what: &str, errs: &mut Vec<String>| -> Vec<usize> {
        match g {
            Some(v) if v.len() != l => {
                errs.push(format!("{what} groups have length {}", v.len()));
                (0..l).collect()
            }
            Some(v) => v.clone(),
            None => (0..l).collect(),
        }
    };
    let sg = groups_ok(&p.source_groups, "source", &mut errs);
    let dg = groups_ok(&p.dest_groups, "destination", &mut errs);
    let shape_ok = |m: &CMat, r: usize, c: usize, what: String, errs: &mut Vec<String>| {
        if m.shape() != (r, c) {
            errs.push(format!("{what} has shape {:?}, expected {r}x{c}", m.shape()));
            false
        } else if let Err(e) = check_finite(m, &what) {
            errs.push(e.to_string());
            false
        } else {
            true
        }
    };
    match &p.channels {
        Channels::Direct(h) => {
            if !p.clusters.is_empty() {
                errs.push("direct channels given for a network with relay clusters".into());
            }
            if h.len() != l || h.iter().any(|r| r.len() != l) {
                errs.push(format!("direct channel table must be {l}x{l}"));
            } else {
                for i in 0..l {
                    for k in 0..l {
                        shape_ok(&h[i][k], p.rx_antennas[i], p.tx_antennas[k], format!("channel ({i},{k})"), &mut errs);
                    }
                }
            }
        }
        Channels::Relayed { source, inter, destination } => {
            let q = p.clusters.len();
            if q == 0 {
                errs.push("relayed channels need at least one cluster".into());
                return errs;
            }
            let n: Vec<usize> = p.clusters.iter().map(|c| c.antennas()).collect();
            if source.len() != l || destination.len() != l || inter.len() != q - 1 {
                errs.push(format!(
                    "expected {l} source, {} inter-cluster and {l} destination channels",
                    q - 1
                ));
                return errs;
            }
            for i in 0..l {
                shape_ok(&source[i], n[0], p.tx_antennas[i], format!("source channel H0[{i}]"), &mut errs);
                shape_ok(&destination[i], p.rx_antennas[i], n[q - 1], format!("destination channel HQ[{i}]"), &mut errs);
            }
            for (j, h) in inter.iter().enumerate() {
                shape_ok(h, n[j + 1], n[j], format!("inter-cluster channel Hq[{j}]"), &mut errs);
            }
            if errs.is_empty() {
                for a in 0..l {
                    for b in (a + 1)..l {
                        if sg[a] == sg[b] && source[a] != source[b] {
                            errs.push(format!("links {a} and {b} share a source but not its channel"));
                        }
                        if dg[a] == dg[b] && destination[a] != destination[b] {
                            errs.push(format!("links {a} and {b} share a destination but not its channel"));
                        }
                    }
                }
            }
        }
    }
    for a in 0..l {
        for b in (a + 1)..l {
            if sg[a] == sg[b] && p.tx_antennas[a] != p.tx_antennas[b] {
                errs.push(format!("links {a} and {b} share a source with different antenna counts"));
            }
            if dg[a] == dg[b] && p.rx_antennas[a] != p.rx_antennas[b] {
                errs.push(format!("links {a} and {b} share a destination with different antenna counts"));
            }
        }
    }
    errs
}

/// Source covariances and relay amplification matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderState {
    pub sigma: Vec<CMat>,
    pub relays: Vec<CMat>,
}

impl PrecoderState {
    /// Scaled-identity covariances and relay matrices.
    pub fn isotropic(net: &RelayNetwork, power: f64, gain: f64) -> Self {
        let sigma = (0..net.links())
            .map(|l| crate::numerics::scaled_identity(net.tx_antennas(l), power / net.tx_antennas(l) as f64))
            .collect();
        let relays = (0..net.hops())
            .map(|q| crate::numerics::scaled_identity(net.relay_antennas(q), gain))
            .collect();
        Self { sigma, relays }
    }

    pub fn validate(&self, net: &RelayNetwork) -> Result<()> {
        if self.sigma.len() != net.links() || self.relays.len() != net.hops() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} covariances and {} relay matrices for {} links and {} clusters",
                self.sigma.len(),
                self.relays.len(),
                net.links(),
                net.hops()
            )));
        }
        for (l, s) in self.sigma.iter().enumerate() {
            let t = net.tx_antennas(l);
            if s.shape() != (t, t) {
                return Err(Error::DimensionMismatch(format!("covariance {l} has shape {:?}", s.shape())));
            }
            psd(s)?;
        }
        for (q, f) in self.relays.iter().enumerate() {
            let n = net.relay_antennas(q);
            if f.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!("relay matrix {q} has shape {:?}", f.shape())));
            }
            check_finite(f, "relay matrix")?;
            if block_mask(f, net.partition(q)) != *f {
                return Err(Error::DimensionMismatch(format!("relay matrix {q} is not block diagonal")));
            }
        }
        Ok(())
    }
}
