//! Simulation library for the Brownian stalker particle system and the
//! opinion-game market model.
//!
//! * [`rng_paths`]: random streams, Brownian paths, ε-skeletons and exact
//!   exit-time sampling.
//! * [`stalker`]: the attracted processes X and Y built on a skeleton.
//! * [`phi_chain`]: the two-dimensional distance chain and the experiments
//!   probing its recurrence or transience.
//! * [`opinion_game`]: the agent-based order-book model.
//! * [`stats`]: time-series statistics and test statistics shared by the
//!   experiments.

pub mod error;
pub mod io;
pub mod opinion_game;
pub mod rng_paths;
pub mod phi_chain;
pub mod stalker;
pub mod stats;

pub use error::{Error, Result};
