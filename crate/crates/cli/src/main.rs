//! `quenchlab`: command-line driver for the quenching laboratory.

mod commands;
mod config;
mod output;

use anyhow::Result;
use clap::{Parser, Subcommand};
use config::{Config, ConfigError, ExperimentKind, Override};
use output::Output;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_POSITIVITY: u8 = 3;
const EXIT_NO_QUENCH: u8 = 4;

#[derive(Parser)]
#[command(name = "quenchlab", version, about = "Numerical experiments on quenching for h_t = h_xx - h^(-beta)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Set a config value, e.g. `seed.d0=0.1`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Hermite orthogonality, the linear operator and the Mehler kernel.
    SpectralTest,
    /// Exponents, profiles, the theta map and the flat companion.
    ProfileCheck,
    /// Integrate the physical equation to quenching or `window.t_end`.
    Simulate,
    /// Unstable and stable modes along a run from the prepared seed.
    Modes,
    /// Bisection on the seed parameters (d0, d1).
    Shoot {
        /// Bisection levels; 0 evaluates the box centre only.
        #[arg(long, value_name = "N")]
        levels: Option<usize>,
        /// Search box as d0min,d0max,d1min,d1max.
        #[arg(long, value_name = "d0min,d0max,d1min,d1max", allow_hyphen_values = true)]
        seed_box: Option<String>,
    },
    /// Final profile at quenching compared with H*.
    FinalProfile,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::SpectralTest => ExperimentKind::SpectralTest,
            Command::ProfileCheck => ExperimentKind::ProfileCheck,
            Command::Simulate => ExperimentKind::Simulate,
            Command::Modes => ExperimentKind::Modes,
            Command::Shoot { .. } => ExperimentKind::Shoot,
            Command::FinalProfile => ExperimentKind::FinalProfile,
        }
    }
}

fn flag_overrides(cli: &Cli) -> Result<Vec<Override>, ConfigError> {
    let mut list = cli.overrides.iter().map(|o| Override::parse(o)).collect::<Result<Vec<_>, _>>()?;
    let mut push = |key: &str, value: String, flag: String| list.push(Override { key: key.into(), value, flag });
    if let Command::Shoot { levels, seed_box } = &cli.command {
        if let Some(n) = levels {
            push("shoot.levels", n.to_string(), format!("--levels {n}"));
        }
        if let Some(raw) = seed_box {
            let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
            let valid = parts.len() == 4 && parts.iter().all(|p| p.parse::<f64>().is_ok());
            if !valid {
                return Err(ConfigError { origin: format!("--seed-box {raw}"), message: "expected four numbers d0min,d0max,d1min,d1max".into() });
            }
            for (key, v) in ["shoot.d0_min", "shoot.d0_max", "shoot.d1_min", "shoot.d1_max"].iter().zip(&parts) {
                push(key, v.to_string(), format!("--seed-box {raw}"));
            }
        }
    }
    if let Some(dir) = &cli.out {
        let quoted = toml::Value::String(dir.display().to_string()).to_string();
        push("output", quoted, format!("--out {}", dir.display()));
    }
    Ok(list)
}

fn execute(cfg: &Config, kind: ExperimentKind, out: &mut Output) -> Result<()> {
    match kind {
        ExperimentKind::SpectralTest => commands::spectral_test(cfg, out),
        ExperimentKind::ProfileCheck => commands::profile_check(cfg, out),
        ExperimentKind::Simulate => commands::simulate_cmd(cfg, out),
        ExperimentKind::Modes => commands::modes(cfg, out),
        ExperimentKind::Shoot => commands::shoot_cmd(cfg, out),
        ExperimentKind::FinalProfile => commands::final_profile_cmd(cfg, out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<quench_core::Error>() {
        Some(quench_core::Error::PositivityLoss(_)) => EXIT_POSITIVITY,
        Some(quench_core::Error::NoQuench) => EXIT_NO_QUENCH,
        _ => EXIT_OTHER,
    }
}

fn real_main(cli: Cli) -> Result<()> {
    let kind = cli.command.kind();
    let overrides = flag_overrides(&cli)?;
    let cfg = config::load(cli.config.as_deref(), &overrides, Some(kind))?;
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("quenchlab-out"));
    let mut out = Output::create(&dir)?;
    let outcome = execute(&cfg, kind, &mut out);
    let manifest = out.finish()?;
    log::info!("wrote {}", manifest.display());
    outcome
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
