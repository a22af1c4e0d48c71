//! Forward-error-correction workbench: GF(2) code construction, AWGN channel
//! simulation, exact MAP / BP / Chase-Pyndiah reference decoders, a
//! soft-output syndrome-based Stacked-GRU decoder with its training loop,
//! and iterative turbo-product decoding.

pub mod autodiff;
pub mod channel;
pub mod config;
pub mod decoders;
pub mod error;
pub mod gf2;
pub mod nn;
pub mod sim;
pub mod tpc;
pub mod train;

pub use error::{Error, Result};
