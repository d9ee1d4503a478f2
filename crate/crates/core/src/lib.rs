pub mod config;
pub mod contracting;
pub mod error;
pub mod grid;
pub mod limits;
pub mod lp;
pub mod map;
pub mod norms;
pub mod orbit;
pub mod runner;
pub mod singular;
pub mod spectral;
pub mod suite;
pub mod transfer;
pub mod ulam;

pub use error::{Error, Result};
