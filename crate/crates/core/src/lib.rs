//! Max-min fair multigroup multicast beamforming with rate splitting and
//! cooperative multicast decoding for cache-aided cloud radio access networks.

pub mod channel;
pub mod clustering;
pub mod conic;
pub mod error;
pub mod grouping;
pub mod harness;
pub mod network;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod wmmse;

pub use error::{Error, Result};
