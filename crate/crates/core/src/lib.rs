//! Go move prediction with reflection-tied convolutional networks.

pub mod cli;
pub mod encoder;
pub mod evaluator;
pub mod goboard;
pub mod gtp;
pub mod sgfio;
pub mod symmetry;
pub mod symnet;
pub mod trainer;
