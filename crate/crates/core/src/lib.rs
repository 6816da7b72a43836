//! Relay-topology search and max-min fair TDMA slot allocation for
//! energy-harvesting IoT networks with stationary or mobile nodes.

pub mod allocator;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod gmga;
pub mod mobility;
pub mod network;
pub mod seeding;
pub mod solver;

pub use error::{Error, Result};
