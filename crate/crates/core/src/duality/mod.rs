//! Transformations from a forward precoder state to a dual-network state
//! achieving at least the same rates.

mod scaling;
mod streams;

pub use scaling::{scaling_system, type2_dual_transform, DualScaling, Type2Transform};
pub use streams::{
    build_crosstalk, covariance_transform, decompose_streams, mmse_sic_receivers, CovarianceTransform, Stream,
    StreamModel,
};

use crate::network::{dual_relays, reduce_to_ifn, ConstraintMatrices, PrecoderState, RelayNetwork};
use crate::Result;

/// Dual state with unscaled relays `F̂ = F†`: the covariance transform on
/// the equivalent one-hop network plus reversed, conjugate-transposed
/// relay matrices. Total weighted power is preserved.
pub fn type1_dual_transform(net: &RelayNetwork, state: &PrecoderState, cm: &ConstraintMatrices) -> Result<PrecoderState> {
    state.validate(net)?;
    let ifn = reduce_to_ifn(net, &state.relays, cm)?;
    let ct = covariance_transform(&ifn, &state.sigma)?;
    Ok(PrecoderState { sigma: ct.sigma_hat, relays: dual_relays(&state.relays) })
}
