//! Library half of the `gubqc` binary, so the command logic is testable
//! without spawning processes.

pub mod angle;
pub mod commands;
pub mod config;
