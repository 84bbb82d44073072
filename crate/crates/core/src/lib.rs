pub mod cli;
pub mod data;
pub mod error;
pub mod inference;
pub mod learners;
mod linalg;
pub mod oracle;
pub mod problem;
pub mod rewards;
pub mod rng;
pub mod saddle;
pub mod sim;

pub use error::{MimalError, Result};
