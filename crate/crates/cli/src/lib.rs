//! Library surface of the `histoseg` binary: file formats, configuration
//! and the subcommand implementations. The binary itself is a thin
//! dispatcher; the integration and acceptance suites drive these modules
//! directly where byte-level checks need the same readers and writers.

pub mod cjson;
pub mod classes;
pub mod commands;
pub mod config;
pub mod errors;
pub mod ppm;
pub mod tensor;

use clap::{Parser, Subcommand};

use errors::CmdResult;

#[derive(Parser, Debug)]
#[command(
    name = "histoseg",
    version,
    about = "Nucleus instance segmentation and epithelial layer analysis for H&E tiles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encode ground-truth maps into the four training-target tensors.
    Encode(commands::encode::EncodeArgs),
    /// Turn prediction tensors into instances, classes and layer maps.
    Postprocess(commands::postprocess::PostprocessArgs),
    /// Score predictions against ground truth.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Select patches of a slide by tissue and epithelium criteria.
    Tile(commands::tile::TileArgs),
    /// Generate a deterministic synthetic scene and prediction bundle.
    Synth(commands::synth::SynthArgs),
    /// Evaluate the multi-task loss, or verify its gradients.
    Losses(commands::losses::LossesArgs),
}

pub fn run(cli: &Cli) -> CmdResult<()> {
    match &cli.command {
        Command::Encode(args) => commands::encode::run(args),
        Command::Postprocess(args) => commands::postprocess::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Tile(args) => commands::tile::run(args),
        Command::Synth(args) => commands::synth::run(args),
        Command::Losses(args) => commands::losses::run(args),
    }
}
