//! Config-driven experiment runner behind the `gisdesign` binary.

pub mod commands;
pub mod config;
