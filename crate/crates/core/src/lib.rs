pub mod cli;
pub mod config;
pub mod error;
pub mod frames;
pub mod grid;
pub mod metrics;
pub mod networks;
pub mod noise;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
