//! Command-line pipeline: encode, train, eval, ablate, render.

pub mod archive;
pub mod commands;
pub mod config;
pub mod render;

pub use archive::{ArchiveEntry, GafArchive};
pub use commands::{run, run_from_args, Cli, Command};
pub use config::RunConfig;
pub use render::{gray_level, write_png, Palette};
