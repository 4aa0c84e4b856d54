//! horizonlab: a numerical laboratory for studying how optimal-control
//! switching patterns behave as the planning horizon grows.

pub mod error;
pub mod trajectory;
pub mod dynamics;
pub mod costs;
pub mod pmp;
pub mod optim;
pub mod switched;
pub mod sir;
pub mod pattern;
pub mod gammalab;
pub mod cli;

pub use cli::run;
pub use error::{Error, Result};
