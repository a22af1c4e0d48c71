//! Reference and baseline decoders: exact bitwise MAP (enumeration and
//! syndrome trellis), sum-product BP, syndrome-table hard decoding, and
//! Chase-II with Pyndiah soft output.

pub mod bp;
pub mod chase;
pub mod map;

pub use bp::bp_sum_product;
pub use chase::{chase2, hard_decode_syndrome_table, pyndiah_soft, ChaseResult, PYNDIAH_BETA};
pub use map::{map_bitwise_enum, map_bitwise_trellis};
