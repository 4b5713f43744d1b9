use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riemstab_cli::{list_presets, run, CliError, RunConfig, DEFAULT_OUT};

#[derive(Parser)]
#[command(
    name = "riemstab",
    version,
    about = "Stability experiments for elliptic systems on Riemannian charts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment in a config and write the reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config without running anything.
    CheckConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print metric and nonlinearity presets.
    ListPresets {
        /// Also list the aliases declared in this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Hide the built-in presets.
        #[arg(long)]
        no_builtins: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RIEMSTAB_LOG", "warn")).init();
    let code = match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run {
            config,
            jobs,
            seed,
            out,
        } => {
            if jobs == Some(0) {
                return Err(CliError::invalid("--jobs", "must be at least 1"));
            }
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| DEFAULT_OUT.into());
            let resolved = cfg.resolve(true)?;
            let report = run(&resolved, jobs, &dir)?;
            for rep in &report.experiments {
                println!("{:<24} {}", rep.id, rep.verdict.as_str());
            }
            for f in &report.failures {
                println!("{:<24} failed: {}", f.id, f.error);
            }
            println!("report written to {}", dir.join("report.json").display());
            Ok(report.exit_code())
        }
        Command::CheckConfig { config } => {
            let resolved = RunConfig::load(&config)?.resolve(true)?;
            println!("ok: {} experiment(s)", resolved.ids.len());
            Ok(0)
        }
        Command::ListPresets {
            config,
            no_builtins,
        } => {
            let resolved = match config {
                Some(p) => Some(RunConfig::load(&p)?.resolve(true)?),
                None => None,
            };
            print!("{}", list_presets(resolved.as_ref(), !no_builtins));
            Ok(0)
        }
    }
}
