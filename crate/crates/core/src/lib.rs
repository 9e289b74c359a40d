pub mod error;
pub mod checks;
pub mod cli;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod inference;
pub mod networks;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
