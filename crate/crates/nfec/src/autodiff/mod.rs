//! Reverse-mode autodiff over dense tensors, plus Adam and the
//! reduce-on-plateau scheduler.

pub mod optim;
pub mod params;
pub mod tape;

pub use optim::{AdamState, ReduceOnPlateau};
pub use params::ParamSet;
pub use tape::{grad_check, Gradients, NodeId, Tape, Tensor};
