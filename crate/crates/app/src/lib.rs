//! Command-line and HTTP front ends for the wall-detailing workbench.

pub mod backends;
pub mod cli;
pub mod jobs;
pub mod server;
