//! Online coordinated precoding for virtualized multi-cell MIMO networks
//! with delayed channel information.

// `!(x > 0.0)` is used on purpose so NaN fails the same checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod online_precoder;
pub mod rng;
pub mod trace;
pub mod virtualization;

pub use error::{Error, Result};
pub use numerics::ComplexMatrix;
