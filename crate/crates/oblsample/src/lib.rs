//! File formats, obliviousness audits and the command-line front end for
//! `oblsample-core`.

pub mod audit;
pub mod cli;
pub mod data;
pub mod error;
pub mod format;
pub mod reference;
pub mod stats;

pub use error::{Error, Result};
