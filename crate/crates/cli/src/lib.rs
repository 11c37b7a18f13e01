//! Command-line front end and HTTP service for the memory reviver.

pub mod config;
pub mod server;
pub mod setup;
