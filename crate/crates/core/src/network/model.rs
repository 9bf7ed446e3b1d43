use super::{Channels, PrecoderState, RelayNetwork};
use crate::numerics::{hermitian_part, logdet_pd, CMat};
use crate::{Error, Result};

fn check_relays(net: &RelayNetwork, relays: &[CMat]) -> Result<()> {
    if relays.len() != net.hops() {
        return Err(Error::DimensionMismatch(format!(
            "{} relay matrices for {} clusters",
            relays.len(),
            net.hops()
        )));
    }
    for (q, f) in relays.iter().enumerate() {
        let n = net.relay_antennas(q);
        if f.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("relay matrix {q} has shape {:?}", f.shape())));
        }
    }
    Ok(())
}

fn check_link(net: &RelayNetwork, l: usize) -> Result<()> {
    if l >= net.links() {
        return Err(Error::Index(format!("link {l} of {}", net.links())));
    }
    Ok(())
}

/// `B_{q,q2} = F_{q2} H_{q2-1} ⋯ H_q F_q` for `q ≤ q2`.
pub fn cascade(net: &RelayNetwork, relays: &[CMat], q: usize, q2: usize) -> Result<CMat> {
    check_relays(net, relays)?;
    if q > q2 || q2 >= net.hops() {
        return Err(Error::Index(format!("cascade ({q},{q2}) with {} clusters", net.hops())));
    }
    Ok(cascade_unchecked(net, relays, q, q2))
}

pub(crate) fn cascade_unchecked(net: &RelayNetwork, relays: &[CMat], q: usize, q2: usize) -> CMat {
    let mut b = relays[q].clone();
    for j in q..q2 {
        b = &relays[j + 1] * net.inter_channel(j) * b;
    }
    b
}

/// `H_Q^l B_{q,Q}` for every cluster `q`, i.e. the map from the input of
/// cluster `q` to receiver `l`.
pub(crate) fn tails(net: &RelayNetwork, relays: &[CMat], l: usize) -> Vec<CMat> {
    let q = net.hops();
    let mut out = vec![CMat::zeros(0, 0); q];
    if q == 0 {
        return out;
    }
    let mut t = net.dest_channel(l) * &relays[q - 1];
    for j in (0..q).rev() {
        if j < q - 1 {
            t = t * net.inter_channel(j) * &relays[j];
        }
        out[j] = t.clone();
    }
    out
}

/// `B_{1,q} H_0^l` for every cluster `q`: the map from source `l` to the
/// output of cluster `q`.
pub(crate) fn heads(net: &RelayNetwork, relays: &[CMat], l: usize) -> Vec<CMat> {
    let q = net.hops();
    let mut out = Vec::with_capacity(q);
    if q == 0 {
        return out;
    }
    let mut h = &relays[0] * net.source_channel(l);
    out.push(h.clone());
    for j in 1..q {
        h = &relays[j] * net.inter_channel(j - 1) * h;
        out.push(h.clone());
    }
    out
}

pub(crate) fn effective_channel_unchecked(net: &RelayNetwork, relays: &[CMat], l: usize, k: usize) -> CMat {
    match net.channels() {
        Channels::Direct(h) => h[l][k].clone(),
        Channels::Relayed { .. } => {
            let t = tails(net, relays, l);
            &t[0] * net.source_channel(k)
        }
    }
}

/// Effective channel from the transmitter of link `k` to the receiver of
/// link `l`.
pub fn effective_channel(net: &RelayNetwork, relays: &[CMat], l: usize, k: usize) -> Result<CMat> {
    check_relays(net, relays)?;
    check_link(net, l)?;
    check_link(net, k)?;
    Ok(effective_channel_unchecked(net, relays, l, k))
}

/// Relay noise forwarded to receiver `l` plus its own noise.
pub fn effective_noise(net: &RelayNetwork, relays: &[CMat], l: usize) -> Result<CMat> {
    check_relays(net, relays)?;
    check_link(net, l)?;
    let mut w = net.dest_noise(l).clone();
    for (q, t) in tails(net, relays, l).iter().enumerate() {
        w += t * net.relay_noise(q) * t.adjoint();
    }
    Ok(hermitian_part(&w))
}

/// Transmit covariance of every relay cluster.
pub fn relay_tx_covariances(net: &RelayNetwork, state: &PrecoderState) -> Result<Vec<CMat>> {
    state.validate(net)?;
    Ok(relay_tx_unchecked(net, state))
}

pub(crate) fn relay_tx_unchecked(net: &RelayNetwork, state: &PrecoderState) -> Vec<CMat> {
    let mut out = Vec::with_capacity(net.hops());
    if net.hops() == 0 {
        return out;
    }
    let mut y = net.relay_noise(0).clone();
    for l in 0..net.links() {
        let h = net.source_channel(l);
        y += h * &state.sigma[l] * h.adjoint();
    }
    for q in 0..net.hops() {
        let f = &state.relays[q];
        let s = hermitian_part(&(f * &y * f.adjoint()));
        if q + 1 < net.hops() {
            let h = net.inter_channel(q);
            y = h * &s * h.adjoint() + net.relay_noise(q + 1);
        }
        out.push(s);
    }
    out
}

pub fn relay_tx_covariance(net: &RelayNetwork, state: &PrecoderState, q: usize) -> Result<CMat> {
    if q >= net.hops() {
        return Err(Error::Index(format!("cluster {q} of {}", net.hops())));
    }
    Ok(relay_tx_covariances(net, state)?.swap_remove(q))
}

/// Interference-plus-noise covariance at receiver `l`.
pub fn interference_plus_noise(net: &RelayNetwork, state: &PrecoderState, l: usize) -> Result<CMat> {
    state.validate(net)?;
    check_link(net, l)?;
    let mut om = effective_noise(net, &state.relays, l)?;
    for k in net.interferers(l) {
        let h = effective_channel_unchecked(net, &state.relays, l, k);
        om += &h * &state.sigma[k] * h.adjoint();
    }
    Ok(hermitian_part(&om))
}

/// Rate of link `l` in nats.
pub fn link_rate(net: &RelayNetwork, state: &PrecoderState, l: usize) -> Result<f64> {
    let om = interference_plus_noise(net, state, l)?;
    let h = effective_channel_unchecked(net, &state.relays, l, l);
    let x = &om + &h * &state.sigma[l] * h.adjoint();
    Ok(logdet_pd(&x)? - logdet_pd(&om)?)
}

pub fn link_rates(net: &RelayNetwork, state: &PrecoderState) -> Result<Vec<f64>> {
    (0..net.links()).map(|l| link_rate(net, state, l)).collect()
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use crate::numerics::{fro_norm, scaled_identity, trace_re};

    #[test]
    fn scalar_fixture_quantities() {
        let net = scalar_two_hop();
        let st = PrecoderState { sigma: vec![scaled_identity(1, 2.0)], relays: vec![scaled_identity(1, 1.0)] };
        assert!((effective_channel(&net, &st.relays, 0, 0).unwrap()[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((trace_re(&effective_noise(&net, &st.relays, 0).unwrap()) - 2.0).abs() < 1e-15);
        assert!((trace_re(&interference_plus_noise(&net, &st, 0).unwrap()) - 2.0).abs() < 1e-15);
        assert!((link_rate(&net, &st, 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((trace_re(&relay_tx_covariance(&net, &st, 0).unwrap()) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn cascade_matches_product() {
        let net = random_network(4, 2, 3, 2);
        let st = PrecoderState::isotropic(&net, 1.0, 0.7);
        let b = cascade(&net, &st.relays, 0, 2).unwrap();
        let want = &st.relays[2] * net.inter_channel(1) * &st.relays[1] * net.inter_channel(0) * &st.relays[0];
        assert!(fro_norm(&(b - want)) < 1e-12);
        assert!(cascade(&net, &st.relays, 2, 1).is_err());
        let h = effective_channel(&net, &st.relays, 1, 0).unwrap();
        let want = net.dest_channel(1) * cascade(&net, &st.relays, 0, 2).unwrap() * net.source_channel(0);
        assert!(fro_norm(&(h - want)) < 1e-12);
    }

    #[test]
    fn relay_covariance_recursion() {
        let net = random_network(5, 2, 2, 2);
        let st = PrecoderState::isotropic(&net, 2.0, 0.5);
        let r = relay_tx_covariances(&net, &st).unwrap();
        // Direct expansion of the second cluster.
        let b01 = cascade(&net, &st.relays, 0, 1).unwrap();
        let b11 = cascade(&net, &st.relays, 1, 1).unwrap();
        let mut want = &b01 * net.relay_noise(0) * b01.adjoint() + &b11 * net.relay_noise(1) * b11.adjoint();
        for l in 0..2 {
            let g = &b01 * net.source_channel(l);
            want += &g * &st.sigma[l] * g.adjoint();
        }
        assert!(fro_norm(&(&r[1] - want)) < 1e-12);
    }
}
