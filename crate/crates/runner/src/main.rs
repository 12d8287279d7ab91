use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context as _};
use bohmian_runner::{default_out_dir, list_experiments, load_config, run, validate};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bohmian", version, about = "Run de Broglie-Bohm preset experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to a folder under $BOHMIAN_OUT_ROOT.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a parameter, e.g. `--set dt=0.005` or `--set setup.up_probability=0.4`.
        #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the experiment catalog.
    List,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn main() -> ExitCode {
    match try_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> anyhow::Result<bool> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides, seed)?;
            let out = out.unwrap_or_else(|| default_out_dir(&cfg));
            let arts = run(&cfg, &out).with_context(|| format!("running {}", config.display()))?;
            for c in &arts.checks {
                let mark = if c.passed { "ok  " } else { "FAIL" };
                println!(
                    "{mark} {:<40} {:>14.6e} {} {:e}",
                    c.name, c.value, c.comparison, c.threshold
                );
            }
            println!("{} files written to {}", arts.manifest.len() + 1, out.display());
            if !arts.all_passed {
                eprintln!("{}", anyhow!("one or more checks failed"));
            }
            Ok(arts.all_passed)
        }
        Command::Validate { config } => {
            let cfg = validate(&config)?;
            println!("ok: {} (seed {})", cfg.experiment.name(), cfg.seed);
            Ok(true)
        }
        Command::List => {
            for e in list_experiments() {
                println!("{:<24} [{}] {}", e.name, e.module, e.description);
            }
            Ok(true)
        }
    }
}
