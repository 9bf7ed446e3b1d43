use super::streams::StreamModel;
use crate::network::{dual_relays, reduce_to_ifn, ConstraintMatrices, PrecoderState, RelayNetwork};
use crate::numerics::{dominant_eig_nonneg, hermitian_part, real, trace_prod_re, CMat, RMat, RVec};
use crate::network::relay_tx_covariances;
use crate::{Error, Result};

/// Per-hop scaling system of a relay network at a fixed state.
///
/// Row `i` of `matrix` is indexed by noise location (cluster `i`, or the
/// destinations for `i = Q`), column `j` by penalty location (sources for
/// `j = 0`, cluster `j-1` otherwise). Both are normalized by the transmit
/// power of the hop the row belongs to.
#[derive(Debug, Clone)]
pub struct DualScaling {
    pub matrix: RMat,
    /// `n_iᵀ (D⁻¹ - Ψᵀ)⁻¹ n̂_j` before the relay-noise offsets.
    pub coupling: RMat,
    pub hop_powers: Vec<f64>,
    pub lambda_max: f64,
    /// Dominant eigenvector, last entry 1.
    pub scales: RVec,
}

impl DualScaling {
    /// Amplitude factors applied to `F_q†`, one per original cluster.
    pub fn relay_factors(&self) -> Vec<f64> {
        let d = &self.scales;
        (0..d.len() - 1).map(|r| (d[r + 1] / d[r]).sqrt()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Type2Transform {
    pub dual: PrecoderState,
    pub scaling: DualScaling,
}

fn build(net: &RelayNetwork, state: &PrecoderState, cm: &ConstraintMatrices) -> Result<(DualScaling, StreamModel, crate::network::IfnEquivalent)> {
    state.validate(net)?;
    let ifn = reduce_to_ifn(net, &state.relays, cm)?;
    let model = StreamModel::build(&ifn, &state.sigma)?;
    let nq = net.hops();
    let nl = net.links();

    let mut hop_powers = vec![(0..nl).map(|l| trace_prod_re(&state.sigma[l], &cm.source[l])).sum::<f64>()];
    for (q, s) in relay_tx_covariances(net, state)?.iter().enumerate() {
        hop_powers.push(trace_prod_re(s, &cm.relay[q]));
    }
    if let Some(i) = hop_powers.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::ZeroHopPower(i));
    }

    let op = model.dual_operator();
    let lu = op.clone().lu();
    let sv = op.singular_values();
    let cond = sv.max() / sv.min();
    if !(cond <= crate::numerics::COND_LIMIT) {
        return Err(Error::SingularSystem(cond));
    }
    let noise_vecs: Vec<RVec> = (0..=nq)
        .map(|i| model.rx_quadratic(&ifn.noise_parts.iter().map(|p| p[i].clone()).collect::<Vec<_>>()))
        .collect();
    let pen_sol: Vec<RVec> = (0..=nq)
        .map(|j| {
            let nhat = model.tx_quadratic(&ifn.constraint_parts.iter().map(|p| p[j].clone()).collect::<Vec<_>>());
            lu.solve(&nhat).ok_or(Error::SingularSystem(f64::INFINITY))
        })
        .collect::<Result<_>>()?;
    let coupling = RMat::from_fn(nq + 1, nq + 1, |i, j| noise_vecs[i].dot(&pen_sol[j]));
    let matrix = RMat::from_fn(nq + 1, nq + 1, |i, j| {
        let offset = if j > i { ifn.offsets[i][j - 1] } else { 0.0 };
        (coupling[(i, j)] + offset) / hop_powers[i]
    });
    let clean = matrix.map(|x| x.max(0.0));
    let (lambda_max, scales) = dominant_eig_nonneg(&clean)?;
    Ok((DualScaling { matrix, coupling, hop_powers, lambda_max, scales }, model, ifn))
}

/// Scaling matrix and its Perron pair.
pub fn scaling_system(net: &RelayNetwork, state: &PrecoderState, cm: &ConstraintMatrices) -> Result<DualScaling> {
    build(net, state, cm).map(|(s, _, _)| s)
}

/// Dual state whose per-hop powers, under the original noise covariances,
/// reproduce the original per-hop powers in reverse order.
pub fn type2_dual_transform(net: &RelayNetwork, state: &PrecoderState, cm: &ConstraintMatrices) -> Result<Type2Transform> {
    let (scaling, model, ifn) = build(net, state, cm)?;
    let d = &scaling.scales;
    let penalty: Vec<CMat> = ifn
        .constraint_parts
        .iter()
        .map(|parts| hermitian_part(&parts.iter().enumerate().fold(CMat::zeros(parts[0].nrows(), parts[0].ncols()), |acc, (j, p)| acc + p * real(d[j]))))
        .collect();
    let nhat = model.tx_quadratic(&penalty);
    let q = model.reverse_powers(&nhat)?;
    let dims: Vec<usize> = ifn.noise.iter().map(|w| w.nrows()).collect();
    let sigma_hat = model.assemble(&dims, &q);
    let factors = scaling.relay_factors();
    let scaled: Vec<CMat> = state.relays.iter().zip(&factors).map(|(f, &c)| f * real(c)).collect();
    Ok(Type2Transform { dual: PrecoderState { sigma: sigma_hat, relays: dual_relays(&scaled) }, scaling })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{random_network, scalar_two_hop};
    use crate::network::{build_dual, dual_constraints, link_rates, per_hop_values};
    use crate::numerics::{cscg_matrix, scaled_identity, trace_re, SplitMix64};

    #[test]
    fn scalar_fixture() {
        let net = scalar_two_hop();
        let st = PrecoderState { sigma: vec![scaled_identity(1, 2.0)], relays: vec![scaled_identity(1, 1.0)] };
        let cm = ConstraintMatrices::scaled_identity(&net, 1.0);
        let t = type2_dual_transform(&net, &st, &cm).unwrap();
        let a = &t.scaling.matrix;
        let want = [[0.5, 1.0], [1.0 / 3.0, 1.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[(i, j)] - want[i][j]).abs() < 1e-12, "A = {a}");
            }
        }
        assert!((t.scaling.lambda_max - 1.0).abs() < 1e-12);
        assert!((t.scaling.scales[0] - 2.0).abs() < 1e-12);
        assert!((trace_re(&t.dual.sigma[0]) - 3.0).abs() < 1e-12);
        assert!((t.dual.relays[0][(0, 0)].re - 0.5f64.sqrt()).abs() < 1e-12);
        let dnet = build_dual(&net, &cm).unwrap();
        let dual_hops = per_hop_values(&dnet, &t.dual, &dual_constraints(&net)).unwrap();
        assert!((dual_hops[0] - 3.0).abs() < 1e-12 && (dual_hops[1] - 2.0).abs() < 1e-12);
        assert!((link_rates(&dnet, &t.dual).unwrap()[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn per_hop_powers_reverse() {
        let mut rng = SplitMix64::new(61);
        for q in 1..=2 {
            for seed in 0..5 {
                let net = random_network(100 + seed, 2, q, 2);
                let relays = (0..q).map(|_| cscg_matrix(&mut rng, 2, 2, 0.7)).collect();
                let sigma = (0..2).map(|_| { let a = cscg_matrix(&mut rng, 2, 2, 1.0); &a * a.adjoint() }).collect();
                let st = PrecoderState { sigma, relays };
                let cm = ConstraintMatrices::scaled_identity(&net, 1.0);
                let t = type2_dual_transform(&net, &st, &cm).unwrap();
                assert!((t.scaling.lambda_max - 1.0).abs() < 1e-8, "{}", t.scaling.lambda_max);
                let dnet = build_dual(&net, &cm).unwrap();
                let fwd = per_hop_values(&net, &st, &cm).unwrap();
                let back = per_hop_values(&dnet, &t.dual, &dual_constraints(&net)).unwrap();
                for (a, b) in fwd.iter().zip(back.iter().rev()) {
                    assert!((a - b).abs() < 1e-8 * a.max(1.0), "{fwd:?} vs {back:?}");
                }
                let r = link_rates(&net, &st).unwrap();
                let rd = link_rates(&dnet, &t.dual).unwrap();
                for (a, b) in r.iter().zip(&rd) {
                    assert!(*b >= a - 1e-8);
                }
            }
        }
    }

    #[test]
    fn zero_hop_power_is_reported() {
        let net = scalar_two_hop();
        let st = PrecoderState { sigma: vec![scaled_identity(1, 0.0)], relays: vec![scaled_identity(1, 1.0)] };
        let cm = ConstraintMatrices::scaled_identity(&net, 1.0);
        assert!(matches!(scaling_system(&net, &st, &cm), Err(Error::ZeroHopPower(0))));
    }
}
