//! Building, evaluating, and verifying stationary (epsilon-)Nash equilibria
//! in turn-based multiplayer stochastic games with terminal rewards.
//!
//! The crate keeps every probability, payoff, and threshold as an exact
//! rational; l-bit floating-point values appear only as an explicit,
//! exactly-analyzable representation for strategy probabilities.
//!
//! Modules:
//! - [`model`]: game arenas, stationary profiles, parsing and validation;
//! - [`fpnum`]: l-bit floats, truncated arithmetic, distribution rounding;
//! - [`evaluate`]: exact chain values, best responses, threshold decisions;
//! - [`verify`]: (epsilon-)equilibrium and constrained verification;
//! - [`etr_export`]: the degree-2 constraint system and SMT-LIB2 emission;
//! - [`search`]: candidate search with exact re-verification;
//! - [`generators`]: the explicit hard game families.

pub mod etr_export;
pub mod evaluate;
pub mod fpnum;
pub mod generators;
mod linalg;
pub mod model;
pub mod rational;
pub mod search;
pub mod verify;

pub use rational::Rat;
