//! Variable-length feedback coding over discrete memoryless channels.

// Negated comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod channel;
pub mod numeric;
pub mod posterior;
pub mod rng;
pub mod scheme;
pub mod stats;
pub mod harness;
pub mod lab;
