//! Command-line driver for weylflow: configuration, task dispatch, manifests.

pub mod app;
pub mod config;
pub mod describe;
pub mod manifest;
pub mod tasks;
