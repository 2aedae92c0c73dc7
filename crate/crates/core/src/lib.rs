//! Parallel TD(0) with one-shot averaging: exact oracles, simulation of the
//! agent swarm, consensus primitives and finite-time bound evaluators.

pub mod bounds;
pub mod consensus;
pub mod error;
pub mod features;
pub mod gridworld;
pub mod io;
pub mod mdp;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod stats;
pub mod swarm;
pub mod td;

pub use error::{Error, ErrorCategory, Result};
pub use nalgebra;
pub use problem::Problem;
