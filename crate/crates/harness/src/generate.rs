use crate::scenario::{ChannelSource, MatrixSpec, Scenario};
use crate::HarnessError;
use afrelay_core::network::{Channels, NetworkParts, RelayCluster, RelayNetwork};
use afrelay_core::numerics::{cscg_matrix, scaled_identity, SplitMix64};
use afrelay_core::CMat;
use std::collections::HashMap;

/// Builds the network for one seed. Explicit channels ignore the seed.
///
/// Random channels are drawn from one stream in a fixed order: the source
/// channel of every transmitter (links sharing a transmitter share it), the
/// inter-cluster channels in hop order, then the channel into every receiver.
/// Without relays the direct channels are drawn row by row, `H[l][k]`,
/// once per (receiver, transmitter) pair.
pub fn generate_network(scenario: &Scenario, seed: u64) -> Result<RelayNetwork, HarnessError> {
    let t = &scenario.file.topology;
    let l = t.links();
    let clusters_ant = t.cluster_antennas();
    let q = clusters_ant.len();
    let coupling = t.phi.to_table(l);
    let source_groups = t.source_groups.clone();
    let dest_groups = t.dest_groups.clone();
    let (channels, relay_noise, dest_noise) = match &scenario.file.channels {
        ChannelSource::Random { variance, relay_noise, dest_noise } => {
            let mut rng = SplitMix64::new(seed);
            let channels = if q == 0 {
                let sg = |k: usize| source_groups.as_ref().map_or(k, |g| g[k]);
                let dg = |i: usize| dest_groups.as_ref().map_or(i, |g| g[i]);
                let mut seen: HashMap<(usize, usize), CMat> = HashMap::new();
                Channels::Direct(
                    (0..l)
                        .map(|i| {
                            (0..l)
                                .map(|k| {
                                    seen.entry((dg(i), sg(k)))
                                        .or_insert_with(|| cscg_matrix(&mut rng, t.rx_antennas[i], t.tx_antennas[k], *variance))
                                        .clone()
                                })
                                .collect()
                        })
                        .collect(),
                )
            } else {
                let source = shared_draws(source_groups.as_deref(), l, |i, rng| cscg_matrix(rng, clusters_ant[0], t.tx_antennas[i], *variance), &mut rng);
                let inter = (0..q - 1).map(|h| cscg_matrix(&mut rng, clusters_ant[h + 1], clusters_ant[h], *variance)).collect();
                let destination = shared_draws(dest_groups.as_deref(), l, |i, rng| cscg_matrix(rng, t.rx_antennas[i], clusters_ant[q - 1], *variance), &mut rng);
                Channels::Relayed { source, inter, destination }
            };
            let rn = clusters_ant.iter().map(|&n| scaled_identity(n, *relay_noise)).collect();
            let dn = t.rx_antennas.iter().map(|&n| scaled_identity(n, *dest_noise)).collect();
            (channels, rn, dn)
        }
        ChannelSource::Explicit { h0, hq, h_dest, direct, relay_noise, dest_noise } => {
            explicit_channels(scenario, h0, hq, h_dest, direct, relay_noise, dest_noise)?
        }
    };
    let clusters = t
        .relays
        .iter()
        .zip(relay_noise)
        .map(|(p, noise)| RelayCluster { partition: p.clone(), noise })
        .collect();
    let parts = NetworkParts {
        tx_antennas: t.tx_antennas.clone(),
        rx_antennas: t.rx_antennas.clone(),
        clusters,
        channels,
        dest_noise,
        coupling,
        source_groups,
        dest_groups,
    };
    RelayNetwork::new(parts).map_err(|e| match e {
        afrelay_core::Error::InvalidNetwork(v) => HarnessError::Validation(v),
        other => HarnessError::Validation(vec![other.to_string()]),
    })
}

/// One draw per group, in order of first appearance, copied to every link
/// of the group.
fn shared_draws(groups: Option<&[usize]>, l: usize, mut draw: impl FnMut(usize, &mut SplitMix64) -> CMat, rng: &mut SplitMix64) -> Vec<CMat> {
    let mut seen: HashMap<usize, CMat> = HashMap::new();
    (0..l)
        .map(|i| {
            let g = groups.map_or(i, |g| g[i]);
            seen.entry(g).or_insert_with(|| draw(i, rng)).clone()
        })
        .collect()
}

type Built = (Channels, Vec<CMat>, Vec<CMat>);

fn explicit_channels(
    scenario: &Scenario,
    h0: &[MatrixSpec],
    hq: &[MatrixSpec],
    h_dest: &[MatrixSpec],
    direct: &[Vec<MatrixSpec>],
    relay_noise: &[MatrixSpec],
    dest_noise: &[MatrixSpec],
) -> Result<Built, HarnessError> {
    let t = &scenario.file.topology;
    let l = t.links();
    let ant = t.cluster_antennas();
    let q = ant.len();
    let mut errs = vec![];
    let mut build = |m: &MatrixSpec, r: usize, c: usize, what: String| match m.to_matrix(r, c, &what) {
        Ok(x) => x,
        Err(e) => {
            errs.push(e);
            CMat::zeros(r, c)
        }
    };
    let count = |name: &str, got: usize, want: usize, errs: &mut Vec<String>| {
        if got != want {
            errs.push(format!("channels.{name} has {got} entries, expected {want}"));
        }
    };
    let mut counts = vec![];
    count("W", relay_noise.len(), q, &mut counts);
    count("W_dest", dest_noise.len(), l, &mut counts);
    let channels = if q == 0 {
        count("H", direct.len(), l, &mut counts);
        for (i, row) in direct.iter().enumerate() {
            count(&format!("H[{i}]"), row.len(), l, &mut counts);
        }
        if !h0.is_empty() || !hq.is_empty() || !h_dest.is_empty() {
            counts.push("channels: H0, Hq and HQ need relay clusters; use H".into());
        }
        if !counts.is_empty() {
            return Err(HarnessError::Validation(counts));
        }
        Channels::Direct(
            direct
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(k, m)| build(m, t.rx_antennas[i], t.tx_antennas[k], format!("channels.H[{i}][{k}]")))
                        .collect()
                })
                .collect(),
        )
    } else {
        count("H0", h0.len(), l, &mut counts);
        count("Hq", hq.len(), q - 1, &mut counts);
        count("HQ", h_dest.len(), l, &mut counts);
        if !direct.is_empty() {
            counts.push("channels.H is only for networks without relays".into());
        }
        if !counts.is_empty() {
            return Err(HarnessError::Validation(counts));
        }
        let source = h0.iter().enumerate().map(|(i, m)| build(m, ant[0], t.tx_antennas[i], format!("channels.H0[{i}]"))).collect();
        let inter = hq.iter().enumerate().map(|(h, m)| build(m, ant[h + 1], ant[h], format!("channels.Hq[{h}] (hop {})", h + 1))).collect();
        let destination = h_dest
            .iter()
            .enumerate()
            .map(|(i, m)| build(m, t.rx_antennas[i], ant[q - 1], format!("channels.HQ[{i}]")))
            .collect();
        Channels::Relayed { source, inter, destination }
    };
    let rn = relay_noise.iter().enumerate().map(|(h, m)| build(m, ant[h], ant[h], format!("channels.W[{h}]"))).collect();
    let dn = dest_noise.iter().enumerate().map(|(i, m)| build(m, t.rx_antennas[i], t.rx_antennas[i], format!("channels.W_dest[{i}]"))).collect();
    if !errs.is_empty() {
        return Err(HarnessError::Validation(errs));
    }
    Ok((channels, rn, dn))
}
