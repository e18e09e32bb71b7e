//! Complete verification of ReLU networks.
//!
//! Bounds come from backward linear relaxation propagation with optimized
//! lower slopes ([`lirpa`], [`alpha_opt`]); a batched branch-and-bound driver
//! ([`bab`]) splits unstable neurons until every sub-domain is proved, a
//! counterexample is confirmed, or the linear-programming fallback ([`lp`])
//! certifies the remaining leaves infeasible. [`oracle`] holds exhaustive
//! ground-truth machinery for small networks.

pub mod alpha_opt;
pub mod bab;
pub mod error;
pub mod lirpa;
pub mod lp;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
