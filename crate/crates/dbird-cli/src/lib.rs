//! Library half of the `dbird` binary: CSV dataset IO, run manifests, and
//! the subcommand implementations. Split out of `main.rs` so integration
//! tests can exercise the IO layer directly.

pub mod commands;
pub mod io;
pub mod manifest;
