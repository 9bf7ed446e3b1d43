//! Covariance-domain tools for multi-hop MIMO amplify-and-forward relay
//! networks: network model, dual network, dual transformations, polite
//! water-filling, primal optimizers and an outer Lagrange-multiplier loop.

pub mod algorithms;
pub mod duality;
mod error;
pub mod lldm;
pub mod network;
pub mod numerics;
pub mod pwf;

pub use error::{Error, Result};
pub use numerics::{CMat, CVec, C64};
