#![allow(dead_code)]

use std::path::Path;

use clap::Parser;
use gridrisk::cli::{self, Cli};

pub const SEED: u64 = 7;
pub const N: u64 = 2000;

/// Runs a command line in-process and returns its JSON output.
pub fn run(ws: &Path, args: &[&str]) -> String {
    let mut argv = vec!["gridrisk", "--workspace", ws.to_str().unwrap()];
    argv.extend_from_slice(args);
    cli::run(&Cli::parse_from(argv)).unwrap().0
}

/// A 57-bus workspace with samples.
pub fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["import", "ieee57"]);
    run(dir.path(), &["simulate", "--n", &N.to_string(), "--seed", &SEED.to_string()]);
    dir
}
