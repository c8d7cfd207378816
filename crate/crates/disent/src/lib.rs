//! Filesystem side of `disent-core`: config files, checkpoints, image-folder
//! datasets, the training runner, report output and the `disent` CLI.

pub mod checkpoint;
pub mod cli;
pub mod config_file;
pub mod data;
pub mod error;
pub mod report;
pub mod runner;

pub use disent_core as core;
pub use error::{Error, Result};
