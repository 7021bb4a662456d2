//! File formats, parallel simulation and the command line for `swedge-core`.

pub mod error;
pub mod format;
pub mod harness;
pub mod io;

pub use error::{Error, Result};
