pub mod alt;
pub mod bart;
pub mod cli;
pub mod ppcm;
pub mod data;
pub mod dist;
pub mod error;
pub mod metrics;
pub mod rng;
pub mod simgen;

pub use error::{Error, Result};
