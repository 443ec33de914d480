use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use fourier_ed::{load, run};

/// Runs a preset, a config file (`run`), or validates a config (`validate`).
#[derive(Parser, Debug)]
#[command(name = "fourier-ed", version)]
struct Cli {
    /// Preset name, `run` or `validate`.
    command: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value`, applied after the config file. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let path = cli.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let file = text.as_deref().map(|t| (path.as_str(), t));
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("master_seed={seed}"));
    }
    let preset = match cli.command.as_str() {
        "run" | "validate" => {
            if file.is_none() {
                bail!("`{}` needs --config", cli.command);
            }
            None
        }
        name => Some(name),
    };
    let config = load(preset, file, &overrides)?;
    if cli.command == "validate" {
        print!("{}", config.report()?);
        return Ok(ExitCode::SUCCESS);
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.out));
    let summary = run(&config, &out, cli.jobs)?;
    let o = &summary.outcome;
    println!("wrote {} ({} tasks, {} failed)", out.display(), o.tasks, o.failed);
    if o.too_many_failures() {
        eprintln!("error: more than 10% of the tasks failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
