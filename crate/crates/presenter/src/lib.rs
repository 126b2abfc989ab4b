//! Live session server and offline tooling for the magboard engine.

pub mod config;
pub mod protocol;
pub mod server;
pub mod session;
