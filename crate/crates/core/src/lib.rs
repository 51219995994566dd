pub mod augment;
pub mod cli;
pub mod contrastive;
pub mod dataio;
pub mod error;
pub mod model;
pub mod numcore;
pub mod rng;
pub mod sampler;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
