//! Bandit simulation and confidence-width tuning.
//!
//! The crate evaluates tunable bandit policies on problem instances sampled
//! from a prior and locates the regret-minimizing width parameter by noisy
//! ternary search. Modules build on each other in order: deterministic
//! streams, environments, numeric kernels, policies, the regret evaluator,
//! the tuners, the Gittins baseline, and the gap-versus-spread validation.

pub mod env;
pub mod error;
pub mod evaluator;
pub mod gittins;
pub mod numerics;
pub mod policies;
pub mod rng;
pub mod tuner;
pub mod validation;

pub use error::{Error, Result};
