//! `afcsim`: batch runs of the AFC memory simulator.
//!
//! Exit codes: 0 success, 1 i/o failure, 2 configuration or precondition
//! violation, 3 error raised while simulating or fitting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
mod output;
mod run;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::ConfigFile;
use error::CliError;
use output::{Format, OutputDir, RunManifest};

#[derive(Parser, Debug)]
#[command(
    name = "afcsim",
    version,
    about = "Atomic-frequency-comb memory simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "AFCSIM_OUT", default_value = "afcsim-out")]
    out: PathBuf,

    /// Base RNG seed, overriding the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Single-pulse storage over the configured storage times.
    Afc,
    /// Time-bin qubit interference on two superimposed combs.
    Qubit,
    /// Pulse-train storage.
    Multimode,
    /// Short-pulse storage in a wide comb.
    Broadband,
    /// Closed-form efficiency over an OD x finesse grid.
    EfficiencyTable,
    /// Fit the photon-echo decay in `fit_decay.data_csv`.
    FitDecay,
    /// Fit the fringe in `fit_fringe.data_csv`.
    FitFringe,
    /// Repeat one experiment over values of one config key.
    Sweep,
    /// Check the config without running anything.
    Validate,
    /// Print the JSON schema of the config file.
    Schema,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Afc => "afc",
            Command::Qubit => "qubit",
            Command::Multimode => "multimode",
            Command::Broadband => "broadband",
            Command::EfficiencyTable => "efficiency-table",
            Command::FitDecay => "fit-decay",
            Command::FitFringe => "fit-fringe",
            Command::Sweep => "sweep",
            Command::Validate => "validate",
            Command::Schema => "schema",
        }
    }
}

fn load(cli: &Cli) -> Result<(ConfigFile, PathBuf), CliError> {
    match &cli.config {
        Some(path) => {
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((config::load(path)?, dir))
        }
        None => Ok((ConfigFile::default(), PathBuf::from("."))),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    if cli.command == Command::Schema {
        let schema = schemars::schema_for!(ConfigFile);
        let text = serde_json::to_string_pretty(&schema).expect("schema serializes");
        // A closed pipe (e.g. `| head`) is not an error.
        let _ = writeln!(std::io::stdout(), "{text}");
        return Ok(());
    }
    let (cfg, config_dir) = load(cli)?;
    let seed = cli.seed.unwrap_or(cfg.seed);

    if cli.command == Command::Validate {
        let warnings = run::validate(&cfg, &config_dir)?;
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        println!("config is valid ({} warning(s))", warnings.len());
        return Ok(());
    }

    let work = || match cli.command {
        Command::Afc => run::afc(&cfg.afc, seed),
        Command::Qubit => run::qubit(&cfg.qubit, seed),
        Command::Multimode => run::multimode(&cfg.multimode, seed),
        Command::Broadband => run::broadband(&cfg.broadband, seed),
        Command::EfficiencyTable => run::efficiency_table(&cfg.efficiency_table),
        Command::FitDecay => run::fit_decay(cfg.fit_decay.as_ref(), &config_dir),
        Command::FitFringe => run::fit_fringe_data(cfg.fit_fringe.as_ref(), &config_dir),
        Command::Sweep => run::sweep(&cfg, seed),
        Command::Validate | Command::Schema => unreachable!("handled above"),
    };
    let outcome = match cli.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }?;

    let mut out = OutputDir::create(cli.out.clone(), cli.format)?;
    outcome.write(&mut out)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let manifest = RunManifest {
        tool: "afcsim",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name().into(),
        config_path: cli.config.as_ref().map(|p| p.display().to_string()),
        resolved_config: serde_json::to_value(&cfg).expect("configs serialize"),
        seeds: outcome.seeds.clone(),
        outputs: Vec::new(),
        warnings: outcome.warnings.clone(),
        wall_clock_s: 0.0,
    };
    let root = out.root().to_path_buf();
    out.finish(manifest, started)?;
    println!("{} -> {}", cli.command.name(), root.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
