mod args;
mod commands;
mod error;
mod manifest;
mod settings;

use clap::Parser;

use args::{Cli, Command};
use commands::Context;
use error::CliError;
use settings::Settings;

/// `--seed`, then `HPC_SEED`, then the settings file, then 0.
fn resolve_seed(flag: Option<u64>, settings: &Settings) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("HPC_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("HPC_SEED is not an unsigned integer: `{v}`"))),
        Err(_) => Ok(settings.seed.unwrap_or(0)),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.config.as_deref())?;
    let seed = resolve_seed(cli.seed, &settings)?;
    let parallelism = match cli.parallelism {
        Some(0) => return Err(CliError::Config("--parallelism must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build_global()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let ctx = Context {
        seed,
        parallelism,
        settings,
        strip_ancestors: cli.strip_ancestors,
    };
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Fit(a) => commands::fit(&ctx, a),
        Command::Summarize(a) => commands::summarize(&ctx, a),
        Command::Classify(a) => commands::classify(&ctx, a),
        Command::Calibrate(a) => commands::calibrate(&ctx, a),
        Command::Diversity(a) => commands::diversity(&ctx, a),
        Command::CheckGrad(a) => commands::check_grad(&ctx, a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("hpc: {e}");
        std::process::exit(e.exit_code());
    }
}
