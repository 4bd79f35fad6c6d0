//! Unbalanced and minibatch optimal transport.
//!
//! The crate is organised bottom-up:
//!
//! - [`measures`]: point clouds, weight vectors, ground costs, Csiszàr divergences
//! - [`solvers`]: log-domain generalized Sinkhorn, Sinkhorn divergence, exact references
//! - [`minibatch`]: complete/incomplete minibatch estimators and averaged plans
//! - [`gradients`]: envelope gradients and the particle flow built on them
//! - [`jumbot`]: joint feature/label minibatch UOT for toy domain adaptation
//! - [`datasets`]: seeded synthetic generators shared by tests and experiments

pub mod datasets;
pub mod error;
pub mod gradients;
pub mod jumbot;
pub mod measures;
pub mod minibatch;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
