pub mod checkpoint;
pub mod clifford;
pub mod config;
pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod flow;
pub mod fourier;
pub mod grid;
pub mod init;
pub mod runner;
pub mod spectral;
pub mod target;

pub use error::{Error, Result};
