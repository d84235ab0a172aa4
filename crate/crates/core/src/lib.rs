//! Price-of-anarchy analysis for distributed resource allocation games in
//! which agents observe only part of the population.

pub mod error;
pub mod experiments;
pub mod index_sets;
pub mod lp;
pub mod mechanisms;
pub mod network;
pub mod oracle;
pub mod poa;

pub use error::{PoaError, Result};
