#![no_std]

extern crate alloc;

pub mod accounting;
pub mod binomial;
pub mod error;
pub mod memory;
pub mod prp;
pub mod sampling;
pub mod seed;
pub mod shuffle;
pub mod template;

pub use error::{Error, Result};
