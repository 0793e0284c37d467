//! Operator surface of the simulation: CLI subcommands and the HTTP API.

pub mod commands;
pub mod http;
