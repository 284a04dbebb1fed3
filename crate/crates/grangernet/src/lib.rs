//! File formats, checkpoints, run configuration and the command pipeline
//! around [`grangernet_core`].
//!
//! The `grangernet` binary is a thin clap front end over [`pipeline`]; the
//! same functions can be called directly from Rust.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
