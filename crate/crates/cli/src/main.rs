mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rwdre::config::{preset, ExperimentConfig, PRESETS};
use rwdre::error::Error;

/// Random walks in dynamic random environments: simulation, trichotomy
/// classification, property validation and parameter sweeps.
#[derive(Parser, Debug)]
#[command(name = "rwdre", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long, global = true, value_name = "NAME", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    pub preset: Option<String>,
    /// Base seed (overrides `rng.base_seed`).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample environments, arrow fields and paths and write them as text.
    Simulate {
        /// Number of replicas to write.
        #[arg(long, default_value_t = 1)]
        replicas: usize,
    },
    /// Estimate the transient-right / transient-left / recurrent fractions.
    Classify,
    /// Run the property suites on the configuration (or on every preset).
    Validate {
        /// Drive the middle walk of the coupling suites with a field whose
        /// arrows are reversed; the coalescence suite must then fail.
        #[arg(long)]
        inject_fault: bool,
    },
    /// Classify over the grid of the `sweep` section.
    Sweep,
}

/// Failure of a subcommand, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Suite(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Suite(_) => 2,
            Failure::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Suite(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidParameter { .. } | Error::Parse { .. } => Failure::Config(e.to_string()),
            Error::Io(_) => Failure::Io(e.to_string()),
            Error::Model(_) | Error::WindowViolation { .. } => Failure::Suite(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

/// The configuration selected on the command line, with flag overrides.
pub struct Selected {
    pub label: String,
    pub config: ExperimentConfig,
}

fn select(global: &GlobalArgs) -> Result<Option<Selected>, Failure> {
    let loaded = match (&global.config, &global.preset) {
        (Some(path), _) => {
            let config = ExperimentConfig::load(path).map_err(|e| match e {
                Error::Io(io) => Failure::Io(format!("{}: {io}", path.display())),
                other => Failure::Config(other.to_string()),
            })?;
            let label = path.file_stem().map_or("config".into(), |s| s.to_string_lossy().into_owned());
            Some(Selected { label, config })
        }
        (None, Some(name)) => Some(Selected {
            label: name.clone(),
            config: preset(name).map_err(|e| Failure::Config(e.to_string()))?,
        }),
        (None, None) => None,
    };
    Ok(loaded.map(|mut s| {
        apply_overrides(&mut s.config, global);
        s
    }))
}

pub fn apply_overrides(config: &mut ExperimentConfig, global: &GlobalArgs) {
    if let Some(seed) = global.seed {
        config.rng.base_seed = seed;
    }
    if let Some(out) = &global.out {
        config.output.directory = out.clone();
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let selected = select(&cli.global)?;
    let require = |s: Option<Selected>| {
        s.ok_or_else(|| Failure::Config("no configuration: pass --config PATH or --preset NAME".into()))
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.workers {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool.build().map_err(|e| Failure::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate { replicas } => commands::simulate(&require(selected)?, replicas),
        Command::Classify => commands::classify(&require(selected)?),
        Command::Sweep => commands::sweep(&require(selected)?),
        Command::Validate { inject_fault } => commands::validate(selected, &cli.global, inject_fault),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RWDRE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
