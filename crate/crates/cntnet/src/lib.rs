//! Files, reports and the command-line pipeline around `cntnet-core`.

pub mod analysis;
pub mod cli;
pub mod commands;
pub mod config;
pub mod data;
pub mod dataio;
pub mod error;
pub mod population;
pub mod presets;

pub use error::{Category, Error, ParseError, Result};
