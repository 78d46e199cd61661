pub mod classify;
pub mod dynamics;
pub mod error;
pub mod pce;
pub mod probability;
pub mod statistics;

pub use error::{Error, Result};
