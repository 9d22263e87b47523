//! The segmentation network and its training machinery.
//!
//! Everything is built on a small reverse-mode autodiff tape over 2-D
//! arrays ([`autograd`]). The network itself ([`network`]) has two forward
//! paths: a tape-recorded one used for training, and a streaming
//! allocation-light one used for inference at full point counts where the
//! quadratic attention intermediates of the tape would not fit comfortably
//! in memory. [`checkpoint`] serializes parameters and optimizer state.

pub mod autograd;
pub mod checkpoint;
pub mod knn;
pub mod network;

pub use autograd::{Gradients, Real, Tape, Var};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use network::{Network, NetworkConfig, NetworkError, ParamSet};
