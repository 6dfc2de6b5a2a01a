use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use xcov_cli::config::{ExperimentConfig, Format, Mode};
use xcov_cli::run::run;
use xcov_cli::table::{to_csv, to_json};

/// Theory and simulation tables for spiked cross-covariance matrices.
#[derive(Debug, Parser)]
#[command(name = "xcov", version)]
struct Args {
    mode: Mode,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides `output.path`. Standard output when neither is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for trial-level parallelism.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.threads == 0 {
        return fail(2, "--threads must be positive");
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(2, format!("cannot read {}: {e}", args.config.display())),
    };
    let config = match ExperimentConfig::parse(&text).and_then(|c| c.resolve(args.mode, args.seed)) {
        Ok(c) => c,
        Err(e) => return fail(2, e),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(args.threads).build() {
        Ok(p) => p,
        Err(e) => return fail(1, e),
    };
    let table = match pool.install(|| run(&config)) {
        Ok(t) => t,
        Err(e) => return fail(e.exit_code(), e),
    };
    let body = match config.output.format {
        Format::Csv => to_csv(&table, &config),
        Format::Json => to_json(&table, &config),
    };
    let written = match args.out.as_ref().or(config.output.path.as_ref()) {
        Some(path) => std::fs::write(path, body).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}
