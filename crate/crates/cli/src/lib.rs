//! Command-line front end: image and dictionary file IO, run configuration,
//! CSV reports and the `cssa` subcommands.

pub mod commands;
pub mod config;
pub mod dictfile;
pub mod error;
pub mod image_io;
pub mod report;

pub use commands::{run, Cli, Command};
pub use config::RunConfig;
pub use error::{CliError, ErrorClass, Result};
pub use image_io::{load_image, save_image, Image};
