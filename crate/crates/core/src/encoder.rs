//! Board to feature planes, always from the point of view of the side to move.
//!
//! Channel layout:
//!
//! | mode      | channels                                                        |
//! |-----------|-----------------------------------------------------------------|
//! | basic     | 0 own stones, 1 opponent stones                                 |
//! | liberties | 0..3 own stones with 1, 2, ≥3 liberties; 3..6 same for opponent |
//!
//! followed by the ko plane (if enabled) and the edge channel (if enabled,
//! always last). The edge channel is zero on the board; only its padding
//! ring, added by [`pad_for_first_layer`], is set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::goboard::{Board, DEFAULT_SIZE};
use crate::symnet::{Scalar, Tensor3};

pub use crate::symnet::reflect_tensor;

pub type FeatureTensor = Tensor3<f32>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    pub liberties: bool,
    pub ko_plane: bool,
    pub edge_channel: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig { liberties: true, ko_plane: true, edge_channel: true }
    }
}

impl EncodingConfig {
    pub const BASIC: EncodingConfig =
        EncodingConfig { liberties: false, ko_plane: false, edge_channel: false };

    pub fn channels(&self) -> usize {
        (if self.liberties { 6 } else { 2 }) + self.ko_plane as usize + self.edge_channel as usize
    }

    pub fn ko_channel(&self) -> Option<usize> {
        self.ko_plane.then_some(if self.liberties { 6 } else { 2 })
    }

    pub fn edge_channel_index(&self) -> Option<usize> {
        self.edge_channel.then(|| self.channels() - 1)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("encoder supports {DEFAULT_SIZE}x{DEFAULT_SIZE} boards only, got {0}x{0}")]
    UnsupportedSize(usize),
}

pub fn encode(board: &Board, cfg: EncodingConfig) -> Result<FeatureTensor, EncodeError> {
    encode_as::<f32>(board, cfg)
}

pub fn encode_as<T: Scalar>(board: &Board, cfg: EncodingConfig) -> Result<Tensor3<T>, EncodeError> {
    let n = board.size();
    if n != DEFAULT_SIZE {
        return Err(EncodeError::UnsupportedSize(n));
    }
    let mut t = Tensor3::zeros(cfg.channels(), n, n);
    let me = Some(board.to_move());
    let chains = cfg.liberties.then(|| board.chains());
    for (i, cell) in board.cells().iter().enumerate() {
        if cell.is_none() {
            continue;
        }
        let base = if *cell == me { 0 } else if cfg.liberties { 3 } else { 1 };
        let bucket = match &chains {
            Some(chains) => (chains.liberties_at(i).unwrap().clamp(1, 3) - 1) as usize,
            None => 0,
        };
        t.plane_mut(base + bucket)[i] = T::one();
    }
    if let (Some(c), Some(ko)) = (cfg.ko_channel(), board.ko_point()) {
        t.plane_mut(c)[ko.index(n)] = T::one();
    }
    Ok(t)
}

/// Pads the input for the first convolution: zeros everywhere except the
/// edge channel's ring, which is ones.
pub fn pad_for_first_layer<T: Scalar>(t: &Tensor3<T>, pad: usize, cfg: EncodingConfig) -> Tensor3<T> {
    if pad == 0 {
        return t.clone();
    }
    let edge = cfg.edge_channel_index();
    t.pad_with(pad, |c| if Some(c) == edge { T::one() } else { T::zero() })
}
