//! HTTP service and command line around the retrieval engine.

pub mod api;
pub mod artifacts;
pub mod cli;
pub mod config;
