pub mod config;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod process;
pub mod ratio;
pub mod rng;
pub mod sampler;
pub mod solver1d;
pub mod solver2d;
pub mod tridiag;
pub mod verify;

pub use error::{Error, Result};
