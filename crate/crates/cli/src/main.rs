//! `fusplat` command-line pipeline: synthesize, train, render, evaluate.

mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::Cli;

/// 2 for problems with the inputs (missing or malformed data, bad
/// arguments, mismatched checkpoints), 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use fusplat::Error as E;
    match err.downcast_ref::<E>() {
        Some(
            E::Dataset(_)
            | E::Manifest { .. }
            | E::Shape(_)
            | E::Checkpoint(_)
            | E::Decode { .. }
            | E::UnsupportedFormat { .. }
            | E::InvalidParameter(_)
            | E::Validation(_)
            | E::Parse { .. },
        ) => 2,
        Some(E::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
