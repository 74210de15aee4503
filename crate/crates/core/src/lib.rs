//! Double loop Monte Carlo estimation of `E[G(X(T))]` for one-dimensional
//! McKean-Vlasov SDEs, with importance sampling driven by a control obtained
//! from a backward PDE.

pub mod control;
pub mod dlmc;
pub mod error;
pub mod exec;
pub mod model;
pub mod particle;
pub mod rng;
pub mod sampler;
pub mod studies;

pub use error::{Error, Result};
