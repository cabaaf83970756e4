//! Reflection-preserving move prediction network.
//!
//! Every layer stores one free parameter per orbit of the eight board
//! symmetries acting on its weight coordinates, so the network output
//! commutes with reflecting the input.

mod layers;
mod network;
mod orbit;
mod softmax;
mod tensor;

use thiserror::Error;

pub use layers::{ConvLayer, DenseLayer};
pub use network::{Activation, ConvSpec, Gradients, Network, NetworkSpec, Sample};
pub use orbit::{build_orbit_map_conv, build_orbit_map_dense, DenseOrbits, OrbitError, OrbitMap};
pub use softmax::{masked_nll, masked_softmax};
pub use tensor::{reflect_tensor, Scalar, Tensor3};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("{what}: expected length {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("input shape {got:?} does not match network input {expected:?}")]
    InputShape { expected: (usize, usize, usize), got: (usize, usize, usize) },
    #[error("mask allows no move")]
    NoLegalMove,
    #[error("target {0} is not an allowed move")]
    InvalidTarget(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}
