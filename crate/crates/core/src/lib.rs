//! Preferential batch Bayesian optimization.
pub mod acquisition;
pub mod bo_loop;
pub mod error;
pub mod gp;
pub mod harness;
pub mod inference;
pub mod numerics;
pub mod oracles;
pub mod preference;
pub mod session;
pub use error::{Error, Result};
