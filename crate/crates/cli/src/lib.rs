//! File formats, configuration, chain persistence and commands of the `ehe`
//! tool.

pub mod chain_io;
pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod report;
