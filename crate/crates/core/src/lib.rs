//! Second-order Edgeworth expansion for power variations of one-dimensional
//! diffusions, built from simulated paths and validated by Monte Carlo.

pub mod density;
pub mod diffusion;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod mc;
pub mod rng;
pub mod statistics;
pub mod symbols;

pub use error::{Error, Result};
