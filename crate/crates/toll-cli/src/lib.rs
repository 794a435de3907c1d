//! Library side of the `toll` command: file formats and subcommands.

pub mod commands;
pub mod io;
