//! The `seco-inr` command line: fit a model to an image, super-resolve it,
//! score reconstructions, run the semantic ablation, render phantoms, and
//! time convergence.
//!
//! [`run`] executes a parsed [`Cli`] and returns the run directory it wrote.

pub mod args;
pub mod commands;
pub mod run_dir;

use std::path::PathBuf;

pub use args::{Cli, Command};
pub use run_dir::{Manifest, RunDir, MANIFEST_NAME, OUTPUT_DIR_ENV};

pub fn run(cli: &Cli) -> anyhow::Result<PathBuf> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Fit(a) => commands::fit(out, a),
        Command::Superres(a) => commands::superres(out, a),
        Command::Eval(a) => commands::eval(out, a),
        Command::Ablate(a) => commands::ablate(out, a),
        Command::PhantomGen(a) => commands::phantom_gen(out, a),
        Command::Bench(a) => commands::bench(out, a),
    }
}

/// Renders an error chain on a single line.
pub fn one_line(err: &anyhow::Error) -> String {
    format!("{err:#}").split_whitespace().collect::<Vec<_>>().join(" ")
}
