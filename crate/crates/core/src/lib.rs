//! Entropy-regularized multi-population agent dynamics.
//!
//! Agents carry a position `x ∈ R^d` and a label density `ℓ` over a finite
//! strategy grid. Positions follow a velocity field, labels follow a
//! mass-preserving transfer operator plus an entropic drift that keeps them
//! inside an invariant box `[r_ε, R_ε]`. The crate integrates the particle
//! system, its fast-reaction limit, and the diagnostics used to check them.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod fast_reaction;
pub mod measures;
pub mod particle_system;
pub mod strategy_space;

pub use error::{Error, Result};
