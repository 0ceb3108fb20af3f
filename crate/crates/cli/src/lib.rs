//! Command-line front end and HTTP review server for `priorscrub`.

pub mod cli;
pub mod commands;
pub mod server;

pub use cli::Cli;
pub use commands::run;
