#![allow(dead_code)]

use afrelay_core::network::{Channels, NetworkParts, PrecoderState, RelayCluster, RelayNetwork};
use afrelay_core::numerics::{block_mask, cscg_matrix, identity, SplitMix64};
use afrelay_core::CMat;

pub fn random_psd(rng: &mut SplitMix64, n: usize, scale: f64) -> CMat {
    let a = cscg_matrix(rng, n, n, scale);
    &a * a.adjoint()
}

fn pick(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

/// Random network with `q` clusters, up to `max_l` links, up to `max_ant`
/// antennas per node, random partitions and a random coupling matrix.
pub fn random_network(seed: u64, q: usize, max_l: usize, max_ant: usize) -> RelayNetwork {
    let mut rng = SplitMix64::new(seed);
    let l = pick(&mut rng, 1, max_l);
    let tx: Vec<usize> = (0..l).map(|_| pick(&mut rng, 1, max_ant)).collect();
    let rx: Vec<usize> = (0..l).map(|_| pick(&mut rng, 1, max_ant)).collect();
    let partitions: Vec<Vec<usize>> = (0..q)
        .map(|_| {
            let n = pick(&mut rng, 1, max_ant);
            let mut parts = vec![];
            let mut left = n;
            while left > 0 {
                let s = pick(&mut rng, 1, left);
                parts.push(s);
                left -= s;
            }
            parts
        })
        .collect();
    let coupling: Vec<Vec<bool>> = (0..l).map(|i| (0..l).map(|k| i != k && rng.next_f64() < 0.6).collect()).collect();
    let ant: Vec<usize> = partitions.iter().map(|p| p.iter().sum()).collect();
    let channels = if q == 0 {
        Channels::Direct((0..l).map(|i| (0..l).map(|k| cscg_matrix(&mut rng, rx[i], tx[k], 1.0)).collect()).collect())
    } else {
        Channels::Relayed {
            source: (0..l).map(|i| cscg_matrix(&mut rng, ant[0], tx[i], 1.0)).collect(),
            inter: (1..q).map(|j| cscg_matrix(&mut rng, ant[j], ant[j - 1], 1.0)).collect(),
            destination: (0..l).map(|i| cscg_matrix(&mut rng, rx[i], ant[q - 1], 1.0)).collect(),
        }
    };
    let clusters = partitions
        .into_iter()
        .map(|p| {
            let n = p.iter().sum();
            RelayCluster { partition: p, noise: identity(n) + random_psd(&mut rng, n, 0.2) }
        })
        .collect();
    let dest_noise = rx.iter().map(|&n| identity(n) + random_psd(&mut rng, n, 0.2)).collect();
    NetworkParts { tx_antennas: tx, rx_antennas: rx, clusters, channels, dest_noise, coupling, source_groups: None, dest_groups: None }
        .build()
        .unwrap()
}

pub fn random_state(net: &RelayNetwork, seed: u64) -> PrecoderState {
    let mut rng = SplitMix64::new(seed);
    PrecoderState {
        sigma: (0..net.links()).map(|l| random_psd(&mut rng, net.tx_antennas(l), 0.5)).collect(),
        relays: (0..net.hops())
            .map(|q| {
                let n = net.relay_antennas(q);
                block_mask(&cscg_matrix(&mut rng, n, n, 0.5), net.partition(q))
            })
            .collect(),
    }
}

pub fn random_constraints(net: &RelayNetwork, seed: u64) -> afrelay_core::network::ConstraintMatrices {
    let mut rng = SplitMix64::new(seed);
    afrelay_core::network::ConstraintMatrices {
        source: (0..net.links()).map(|l| identity(net.tx_antennas(l)) * afrelay_core::numerics::real(0.5) + random_psd(&mut rng, net.tx_antennas(l), 0.1)).collect(),
        relay: (0..net.hops()).map(|q| identity(net.relay_antennas(q)) + random_psd(&mut rng, net.relay_antennas(q), 0.1)).collect(),
    }
}
