//! Command-line front end for the histology segmentation pipeline.
//!
//! Exit codes: 0 success, 2 I/O or malformed input, 3 inconsistent content
//! (shape/channel/class mismatches), 4 verification failure. Data goes to
//! stdout, diagnostics to stderr; outputs carry no timestamps and are
//! byte-identical across reruns and worker counts.

use clap::Parser;

use histoseg_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
