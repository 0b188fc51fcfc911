//! Simulation and brute-force verification of self-stabilizing maximal
//! independent set clustering among selfish agents.

pub mod algorithms;
pub mod cli;
pub mod error;
pub mod game;
pub mod graph;
pub mod model;
pub mod rng;
pub mod scheduler;
pub mod selfish;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
