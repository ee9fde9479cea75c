//! Command line front end: argument parsing, output files and the
//! acceptance harness.

pub mod args;
pub mod commands;
pub mod criteria;
pub mod output;

use std::fs;

use anyhow::{Context, Result};
use levywave_core::{LevyTriplet, ModelDocument};

use crate::args::{Cli, Command};
use crate::output::{Output, RunConfig, UsageError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Reads a model document, or standard Brownian motion when `path` is `None`.
pub fn load_model(path: Option<&std::path::Path>) -> Result<LevyTriplet> {
    let Some(path) = path else {
        return Ok(LevyTriplet::brownian(0.0, 1.0)?);
    };
    let text = fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read model {}: {e}", path.display())))?;
    let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| {
        UsageError(format!(
            "model {} is not a valid document: {e}",
            path.display()
        ))
    })?;
    doc.into_model()
        .map_err(|e| UsageError(format!("model {}: {e}", path.display())).into())
}

fn output_files(command: &Command) -> &'static [&'static str] {
    match command {
        Command::Gamma(_) => &["gamma.csv", "gamma_inverse.csv", "summary.json"],
        Command::Phase(_) => &["phase.csv", "summary.json"],
        Command::Qsd(_) => &["qsd.csv", "summary.json"],
        Command::Yaglom(_) => &["yaglom.csv", "summary.json"],
        Command::Front(_) => &["front_trace.csv", "profile.csv", "summary.json"],
        Command::Tw(_) => &["wave.csv", "summary.json"],
        Command::Check(_) => &["criteria.csv", "summary.json"],
    }
}

/// Runs a parsed command and returns the report lines and the pass flag.
pub fn execute(cli: &Cli) -> Result<commands::Report> {
    let common = cli.command.common();
    let model = load_model(common.model.as_deref())?;
    let config = RunConfig {
        command: cli.command.name().to_string(),
        model: model.to_document(),
        model_path: common.model.clone(),
        seed: common.seed,
        params: cli.command.params(),
    };
    let out = Output::prepare(
        &common.out,
        common.force,
        output_files(&cli.command),
        &config,
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .context("building the worker pool")?;
    pool.install(|| match &cli.command {
        Command::Gamma(a) => commands::gamma(&model, a, &out),
        Command::Phase(a) => commands::phase(&model, a, &out),
        Command::Qsd(a) => commands::qsd(&model, a, &out),
        Command::Yaglom(a) => commands::yaglom(&model, a, &out),
        Command::Front(a) => commands::front(&model, a, &out),
        Command::Tw(a) => commands::tw(&model, a, &out),
        Command::Check(a) => commands::check(&model, a, &out),
    })
}

/// Exit code for a finished run.
pub fn exit_code(result: &Result<commands::Report>) -> i32 {
    match result {
        Ok(r) if r.pass => EXIT_OK,
        Ok(_) => EXIT_FAILED,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => EXIT_USAGE,
        Err(e) => match e.downcast_ref::<levywave_core::Error>() {
            Some(levywave_core::Error::InvalidArgument(_))
            | Some(levywave_core::Error::InvalidModel(_))
            | Some(levywave_core::Error::Stability { .. }) => EXIT_USAGE,
            _ => EXIT_FAILED,
        },
    }
}
