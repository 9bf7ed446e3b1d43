use super::model::relay_tx_unchecked;
use super::{PrecoderState, RelayNetwork};
use crate::numerics::{psd, scaled_identity, trace_prod_re, CMat};
use crate::{Error, Result};

/// Penalty matrices `Ŵ_0^l` for the sources and `Ŵ_q` for the clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrices {
    pub source: Vec<CMat>,
    pub relay: Vec<CMat>,
}

impl ConstraintMatrices {
    pub fn scaled_identity(net: &RelayNetwork, scale: f64) -> Self {
        Self {
            source: (0..net.links()).map(|l| scaled_identity(net.tx_antennas(l), scale)).collect(),
            relay: (0..net.hops()).map(|q| scaled_identity(net.relay_antennas(q), scale)).collect(),
        }
    }

    pub fn zeros(net: &RelayNetwork) -> Self {
        Self::scaled_identity(net, 0.0)
    }

    pub fn validate(&self, net: &RelayNetwork) -> Result<()> {
        if self.source.len() != net.links() || self.relay.len() != net.hops() {
            return Err(Error::DimensionMismatch(format!(
                "{} source and {} relay penalty matrices for {} links and {} clusters",
                self.source.len(),
                self.relay.len(),
                net.links(),
                net.hops()
            )));
        }
        for (l, w) in self.source.iter().enumerate() {
            let t = net.tx_antennas(l);
            if w.shape() != (t, t) {
                return Err(Error::DimensionMismatch(format!("source penalty {l} has shape {:?}", w.shape())));
            }
            psd(w)?;
        }
        for (q, w) in self.relay.iter().enumerate() {
            let n = net.relay_antennas(q);
            if w.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!("relay penalty {q} has shape {:?}", w.shape())));
            }
            psd(w)?;
        }
        Ok(())
    }

    /// `Σ_i c_i M_i`.
    pub fn combine(parts: &[(f64, &ConstraintMatrices)]) -> Self {
        let first = parts[0].1;
        let mut out = Self {
            source: first.source.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect(),
            relay: first.relay.iter().map(|m| CMat::zeros(m.nrows(), m.ncols())).collect(),
        };
        for (c, m) in parts {
            let c = crate::numerics::real(*c);
            for (o, s) in out.source.iter_mut().zip(&m.source) {
                *o += s * c;
            }
            for (o, s) in out.relay.iter_mut().zip(&m.relay) {
                *o += s * c;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedConstraint {
    pub matrices: ConstraintMatrices,
    pub budget: f64,
}

/// Linear power constraints on a precoder state.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearConstraintSpec {
    /// One weighted constraint over the whole network.
    SingleNetwork { matrices: ConstraintMatrices, budget: f64 },
    /// One constraint for the sources and one per cluster.
    PerHop { matrices: ConstraintMatrices, budgets: Vec<f64> },
    Multiple(Vec<WeightedConstraint>),
}

impl LinearConstraintSpec {
    pub fn budgets(&self) -> Vec<f64> {
        match self {
            Self::SingleNetwork { budget, .. } => vec![*budget],
            Self::PerHop { budgets, .. } => budgets.clone(),
            Self::Multiple(v) => v.iter().map(|c| c.budget).collect(),
        }
    }
}

/// `Σ_l Tr(Σ_l Ŵ_0^l) + Σ_q Tr(Σ_q^R Ŵ_q)`.
pub fn constraint_value(net: &RelayNetwork, state: &PrecoderState, cm: &ConstraintMatrices) -> Result<f64> {
    state.validate(net)?;
    cm.validate(net)?;
    Ok(per_hop_unchecked(net, state, cm).iter().sum())
}

/// Source term followed by one term per cluster.
pub fn per_hop_values(net: &RelayNetwork, state: &PrecoderState, cm: &ConstraintMatrices) -> Result<Vec<f64>> {
    state.validate(net)?;
    cm.validate(net)?;
    Ok(per_hop_unchecked(net, state, cm))
}

pub(crate) fn per_hop_unchecked(net: &RelayNetwork, state: &PrecoderState, cm: &ConstraintMatrices) -> Vec<f64> {
    let mut out = Vec::with_capacity(net.hops() + 1);
    out.push((0..net.links()).map(|l| trace_prod_re(&state.sigma[l], &cm.source[l])).sum());
    for (q, s) in relay_tx_unchecked(net, state).iter().enumerate() {
        out.push(trace_prod_re(s, &cm.relay[q]));
    }
    out
}

/// Constraint left-hand sides, in the order of [`LinearConstraintSpec::budgets`].
pub fn eval_constraints(net: &RelayNetwork, state: &PrecoderState, spec: &LinearConstraintSpec) -> Result<Vec<f64>> {
    match spec {
        LinearConstraintSpec::SingleNetwork { matrices, .. } => Ok(vec![constraint_value(net, state, matrices)?]),
        LinearConstraintSpec::PerHop { matrices, budgets } => {
            if budgets.len() != net.hops() + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "{} per-hop budgets for {} hops",
                    budgets.len(),
                    net.hops() + 1
                )));
            }
            per_hop_values(net, state, matrices)
        }
        LinearConstraintSpec::Multiple(v) => v.iter().map(|c| constraint_value(net, state, &c.matrices)).collect(),
    }
}
