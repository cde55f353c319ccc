//! Support code for the `gplearn` command line tool.

pub mod commands;
pub mod config;
pub mod gtfile;
pub mod output;
pub mod report;
