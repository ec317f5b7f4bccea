//! Branch-and-bound with a learned node-pruning policy for network power
//! minimization in Cloud-RAN.

pub mod baselines;
pub mod bench;
pub mod bnb;
pub mod conic;
pub mod dagger;
pub mod error;
pub mod netgen;
pub mod par;
pub mod policy;

pub use error::{Error, Result};
