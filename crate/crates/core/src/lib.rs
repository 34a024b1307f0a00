//! Error-pattern distributions for photonic cluster states emitted by a
//! quantum-dot spin coupled to a nuclear spin bath.

pub mod bounds;
pub mod config;
pub mod emission;
pub mod error;
pub mod hamiltonian;
pub mod markov;
pub mod oracle;
pub mod run;
pub mod spin;

pub use error::{Error, Result};
