//! Training AUC-maximizing scorers under group AUC fairness constraints
//! that stay valid when the protected-group labels are noisy.
//!
//! The constraints are enforced for the worst pair distribution inside a
//! total-variation ball around the observed one, using stochastic gradient
//! descent–ascent on the Lagrangian.

pub mod dataset;
pub mod dro;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod scorer;
pub mod trainer;

pub use error::{Error, Result};
