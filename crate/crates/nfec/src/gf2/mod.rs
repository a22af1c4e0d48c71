//! GF(2) linear algebra and linear block code construction.

pub mod alist;
pub mod code;
pub mod coset;
pub mod gf2m;
pub mod matrix;

pub use code::{build_code, make_systematic, CodeSpec, LinearCode};
pub use coset::{coset_leader_table, CosetTable};
pub use matrix::{BinaryMatrix, BitVec};
