//! The `vector` command-line tool and the HTTP service behind the web UI.
//!
//! Both front ends drive the same session and adjustment code, so a run
//! started from either produces identical numbers.

pub mod commands;
pub mod server;
pub mod views;

pub use commands::{run, CliError};
