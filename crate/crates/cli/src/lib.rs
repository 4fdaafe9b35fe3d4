//! Command-line front end for `tetraproj`.

pub mod commands;
pub mod generate;
pub mod manifest;
pub mod preview;
pub mod projfile;
