use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bicausal::cli::{cmd_experiment, cmd_posterior, cmd_rates, cmd_simulate, CliConfig, ConfigFile};
use bicausal::Result;

/// Bayesian causal direction posteriors for two-variable linear Gaussian models.
///
/// Settings come from built-in defaults, then top-level keys of the config
/// file, then its `[command]` section, then `--set` pairs, then the
/// dedicated flags; later sources win.
#[derive(Parser, Debug)]
#[command(name = "bicausal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file with `key = value` lines and optional `[command]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Marginal likelihood method: exact, laplace or quadrature.
    #[arg(long, global = true)]
    method: Option<String>,

    /// Experiment suite figure1 .. figure7.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Extra `key=value` override, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a dataset from a structure.
    Simulate,
    /// Structure posterior for a dataset file.
    Posterior { data: Option<PathBuf> },
    /// Rate exponents over the observational ratio.
    Rates,
    /// Monte Carlo experiment suite.
    Experiment,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Posterior { .. } => "posterior",
            Command::Rates => "rates",
            Command::Experiment => "experiment",
        }
    }
}

fn resolve(cli: &Cli) -> Result<CliConfig> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut map: BTreeMap<String, String> = file.resolve(cli.command.name());
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| bicausal::Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        map.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    if let Some(s) = cli.seed {
        map.insert("seed".into(), s.to_string());
    }
    if let Some(o) = &cli.out {
        map.insert("out".into(), o.display().to_string());
    }
    if let Some(m) = &cli.method {
        map.insert("method".into(), m.clone());
    }
    if let Some(p) = &cli.preset {
        map.insert("preset".into(), p.clone());
    }
    CliConfig::from_map(map)
}

fn run(cli: &Cli) -> Result<Vec<String>> {
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Posterior { data } => cmd_posterior(&cfg, data.as_deref()).map(|r| r.lines),
        Command::Rates => cmd_rates(&cfg),
        Command::Experiment => cmd_experiment(&cfg).map(|r| r.lines),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
