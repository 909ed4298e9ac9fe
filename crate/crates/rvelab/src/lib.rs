pub mod cli;
pub mod descriptors;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod generate;
pub mod homogenize;
pub mod io;
pub mod rng;

pub use error::{Error, Result};
