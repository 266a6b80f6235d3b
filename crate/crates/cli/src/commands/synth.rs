use std::path::{Path, PathBuf};

use clap::Args;
use hierlstm_core::data::{generate_synthetic, write_csv, write_incidents, SyntheticSpec};
use serde::Serialize;

use crate::error::CliError;
use crate::run::Run;

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// JSON file with generator parameters; flags below override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub corridors: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub days: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generate without noise, trend, regime drift, or incidents.
    #[arg(long)]
    pub noiseless: bool,
}

pub fn run(args: SynthArgs, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut run = Run::start("synth", out)?;
    let mut spec = match &args.spec {
        Some(path) => {
            run.input(path)?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(c) = args.corridors {
        spec.corridors = c as usize;
    }
    if let Some(d) = args.days {
        spec.days = d as usize;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if args.noiseless {
        spec = spec.noiseless();
    }
    spec.validate()?;

    let corpus = generate_synthetic(&spec)?;
    write_csv(&corpus.matrix, run.output("travel_times.csv"))?;
    write_incidents(&corpus.matrix, &corpus.incidents, run.output("incidents.csv"))?;
    let json = serde_json::to_string_pretty(&spec).map_err(|e| CliError::data(e.to_string()))?;
    std::fs::write(run.output("spec.json"), json + "\n")?;

    #[derive(Serialize)]
    struct Config<'a> {
        args: &'a SynthArgs,
        resolved: &'a SyntheticSpec,
    }
    run.finish(
        &Config {
            args: &args,
            resolved: &spec,
        },
        &[spec.seed],
    )
}
