use super::{Channels, ConstraintMatrices, NetworkParts, RelayCluster, RelayNetwork};
use crate::numerics::{hermitian_part, trace_prod_re, CMat};
use crate::{Error, Result};

/// Absorb cluster 0 with fixed relay matrix `f0` into the sources.
///
/// Returns the network with one cluster fewer, its penalty matrices and the
/// constant penalty `Tr(F_0 W_0 F_0† Ŵ_0)` that no longer depends on the
/// state. The Lagrangian of the original network equals that of the
/// collapsed network minus the constant.
pub fn collapse_first_cluster(net: &RelayNetwork, cm: &ConstraintMatrices, f0: &CMat) -> Result<(RelayNetwork, ConstraintMatrices, f64)> {
    if net.hops() < 2 {
        return Err(Error::Precondition("collapsing needs at least two relay clusters".into()));
    }
    cm.validate(net)?;
    let n0 = net.relay_antennas(0);
    if f0.shape() != (n0, n0) {
        return Err(Error::DimensionMismatch("first relay matrix".into()));
    }
    let Channels::Relayed { source, inter, destination } = net.channels() else { unreachable!() };
    let a = &inter[0] * f0;
    let mut clusters: Vec<RelayCluster> = net.parts().clusters[1..].to_vec();
    clusters[0].noise = hermitian_part(&(&clusters[0].noise + &a * net.relay_noise(0) * a.adjoint()));
    let parts = NetworkParts {
        tx_antennas: net.parts().tx_antennas.clone(),
        rx_antennas: net.parts().rx_antennas.clone(),
        clusters,
        channels: Channels::Relayed {
            source: source.iter().map(|h| &a * h).collect(),
            inter: inter[1..].to_vec(),
            destination: destination.clone(),
        },
        dest_noise: net.parts().dest_noise.clone(),
        coupling: net.coupling().to_vec(),
        source_groups: Some(net.source_groups().to_vec()),
        dest_groups: Some(net.dest_groups().to_vec()),
    };
    let penalty = ConstraintMatrices {
        source: source
            .iter()
            .zip(&cm.source)
            .map(|(h, w)| {
                let g = f0 * h;
                hermitian_part(&(w + g.adjoint() * &cm.relay[0] * &g))
            })
            .collect(),
        relay: cm.relay[1..].to_vec(),
    };
    let constant = trace_prod_re(&(f0 * net.relay_noise(0) * f0.adjoint()), &cm.relay[0]);
    Ok((parts.build()?, penalty, constant))
}
