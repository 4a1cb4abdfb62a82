//! Entry points of the `tutor` binary: batch subcommands and the HTTP server.

pub mod cli;
pub mod commands;
pub mod config;
pub mod http;
