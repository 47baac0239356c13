pub mod adf;
pub mod autograd;
pub mod cli;
pub mod datasets;
pub mod decompose;
pub mod error;
pub mod model;
pub mod report;
pub mod train;

pub use error::{Error, Result};
