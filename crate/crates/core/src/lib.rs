pub mod audit;
pub mod channels;
pub mod cli;
pub mod divergences;
pub mod error;
pub mod linalg;
pub mod quantities;
pub mod sampling;
pub mod states;

pub use error::{Error, Result};
