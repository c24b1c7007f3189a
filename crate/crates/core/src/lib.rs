pub mod dataset;
pub mod error;
pub mod fairloss;
pub mod grid;
pub mod metrics;
pub mod rng;
pub mod specfn;
pub mod synth;
pub mod trainer;
pub mod vmf;

pub use error::{Error, Result};
