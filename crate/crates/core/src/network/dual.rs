use super::{Channels, ConstraintMatrices, NetworkParts, RelayCluster, RelayNetwork};
use crate::numerics::CMat;
use crate::Result;

/// Dual network: links reversed, channels conjugate-transposed, coupling
/// transposed, and penalty matrices used as noise covariances.
///
/// Dual cluster `j` is original cluster `Q-1-j`, so the dual is itself an
/// ordinary network and dualizing twice (with [`dual_constraints`])
/// reproduces the original.
pub fn build_dual(net: &RelayNetwork, cm: &ConstraintMatrices) -> Result<RelayNetwork> {
    cm.validate(net)?;
    let l = net.links();
    let q = net.hops();
    let channels = match net.channels() {
        Channels::Direct(h) => Channels::Direct((0..l).map(|i| (0..l).map(|k| h[k][i].adjoint()).collect()).collect()),
        Channels::Relayed { source, inter, destination } => Channels::Relayed {
            source: destination.iter().map(|h| h.adjoint()).collect(),
            inter: inter.iter().rev().map(|h| h.adjoint()).collect(),
            destination: source.iter().map(|h| h.adjoint()).collect(),
        },
    };
    let clusters = (0..q)
        .rev()
        .map(|j| RelayCluster { partition: net.partition(j).to_vec(), noise: cm.relay[j].clone() })
        .collect();
    let coupling = (0..l).map(|i| (0..l).map(|k| net.phi(k, i)).collect()).collect();
    NetworkParts {
        tx_antennas: (0..l).map(|i| net.rx_antennas(i)).collect(),
        rx_antennas: (0..l).map(|i| net.tx_antennas(i)).collect(),
        clusters,
        channels,
        dest_noise: cm.source.clone(),
        coupling,
        source_groups: Some(net.dest_groups().to_vec()),
        dest_groups: Some(net.source_groups().to_vec()),
    }
    .build()
}

/// Penalty matrices of the dual network: the original noise covariances in
/// dual cluster order.
pub fn dual_constraints(net: &RelayNetwork) -> ConstraintMatrices {
    ConstraintMatrices {
        source: (0..net.links()).map(|l| net.dest_noise(l).clone()).collect(),
        relay: (0..net.hops()).rev().map(|q| net.relay_noise(q).clone()).collect(),
    }
}

/// Relay matrices of the dual network: `F_q†` in reversed order.
pub fn dual_relays(relays: &[CMat]) -> Vec<CMat> {
    relays.iter().rev().map(|f| f.adjoint()).collect()
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{effective_channel, effective_noise, ConstraintMatrices, PrecoderState};
    use super::*;
    use crate::numerics::{fro_norm, SplitMix64};

    #[test]
    fn dual_of_dual_is_identity() {
        for q in 0..4 {
            let net = random_network(10 + q as u64, 3, q, 2);
            let cm = ConstraintMatrices::scaled_identity(&net, 0.3);
            let d = build_dual(&net, &cm).unwrap();
            let dd = build_dual(&d, &dual_constraints(&net)).unwrap();
            assert_eq!(dd.parts().channels, net.parts().channels);
            assert_eq!(dd.parts().clusters, net.parts().clusters);
            assert_eq!(dd.parts().dest_noise, net.parts().dest_noise);
            assert_eq!(dd.coupling(), net.coupling());
            assert_eq!(dual_constraints(&d), cm);
        }
    }

    #[test]
    fn dual_effective_quantities() {
        let mut rng = SplitMix64::new(3);
        let net = random_network(31, 3, 2, 2);
        let cm = ConstraintMatrices::scaled_identity(&net, 0.5);
        let st = PrecoderState {
            sigma: (0..3).map(|_| crate::numerics::identity(2)).collect(),
            relays: (0..2).map(|_| crate::numerics::cscg_matrix(&mut rng, 2, 2, 1.0)).collect(),
        };
        let d = build_dual(&net, &cm).unwrap();
        let dr = dual_relays(&st.relays);
        for l in 0..3 {
            for k in 0..3 {
                let h = effective_channel(&net, &st.relays, k, l).unwrap();
                let hd = effective_channel(&d, &dr, l, k).unwrap();
                assert!(fro_norm(&(h.adjoint() - hd)) < 1e-12);
            }
            // Dual effective noise is the reduced penalty of the original.
            let ifn = super::super::reduce_to_ifn(&net, &st.relays, &cm).unwrap();
            let wd = effective_noise(&d, &dr, l).unwrap();
            assert!(fro_norm(&(wd - &ifn.constraint[l])) < 1e-12);
        }
    }
}
