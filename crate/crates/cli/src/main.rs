#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{ExperimentConfig, RunMode};
use output::{Manifest, OutputDir};

#[derive(Parser)]
#[command(name = "lrep", version, about = "Long-range exclusion process experiments")]
struct Cli {
    /// Worker threads for replica loops (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Jump, cancel and disappearance probabilities of every occupied site.
    Rates {
        #[command(flatten)]
        common: Common,
        /// Only this source site.
        #[arg(long)]
        site: Option<usize>,
    },
    /// Generator, stationary measures and transition law on a finite space.
    Exact(Common),
    /// Pathwise simulation of independent replicas.
    Simulate(Common),
    /// Coupled rates and ordering statistics for a pair.
    Couple(Common),
    /// Run whatever mode the config file names.
    Experiment(Common),
    /// The acceptance criteria.
    Acceptance {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion ids.
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u32>>,
        /// Perturb one coupled rate so the consistency criterion must fail.
        #[arg(long)]
        fault_injection: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory (overrides LREP_OUTPUT_DIR and the config).
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Lrep(lrep::Error),
    Io(String),
    Criteria,
}

impl From<lrep::Error> for Failure {
    fn from(e: lrep::Error) -> Self {
        Failure::Lrep(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn load(common: &Common, mode: Option<RunMode>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None if mode == Some(RunMode::Acceptance) => ExperimentConfig::for_acceptance(),
        None => return Err(lrep::Error::Invalid("--config is required".into()).into()),
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    if let Some(r) = common.replicas {
        cfg.replicas = r;
    }
    if let Some(o) = &common.output {
        cfg.output = Some(o.clone());
    } else if let Some(o) = std::env::var_os("LREP_OUTPUT_DIR") {
        cfg.output = Some(o.into());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let started = output::now();
    let (common, mode, site) = match &cli.command {
        Command::Rates { common, site } => (common, Some(RunMode::Rates), *site),
        Command::Exact(c) => (c, Some(RunMode::Exact), None),
        Command::Simulate(c) => (c, Some(RunMode::Simulate), None),
        Command::Couple(c) => (c, Some(RunMode::Couple), None),
        Command::Experiment(c) => (c, None, None),
        Command::Acceptance { common, .. } => (common, Some(RunMode::Acceptance), None),
    };
    let mut cfg = load(common, mode)?;
    if let Command::Acceptance { criteria, fault_injection, .. } = &cli.command {
        if criteria.is_some() {
            cfg.criteria = criteria.clone();
        }
        cfg.fault_injection |= fault_injection;
    }
    let resolved = cfg.resolve()?;
    let cfg = resolved.config;
    let kernel = resolved.kernel;
    let k = || kernel.as_ref().expect("resolved with a kernel");

    let artifacts = match cfg.mode {
        RunMode::Rates => commands::rates(&cfg, k(), site)?,
        RunMode::Exact => commands::exact(&cfg, k())?,
        RunMode::Simulate => commands::simulate(&cfg, k())?,
        RunMode::Couple => commands::couple(&cfg, k())?,
        RunMode::Acceptance => {
            let (a, report) = commands::acceptance(&cfg)?;
            for line in report.summary_lines() {
                println!("{line}");
            }
            a
        }
    };

    let mode_name = serde_json::to_value(cfg.mode).expect("serializes");
    let root = cfg.output.clone().unwrap_or_else(|| PathBuf::from("lrep-out").join(mode_name.as_str().unwrap_or("run")));
    let mut out = OutputDir::open(&root)?;
    let config_text = serde_json::to_string_pretty(&cfg).expect("serializes");
    out.write("resolved_config.json", &(config_text.clone() + "\n"))?;
    for (name, text) in &artifacts.files {
        out.write(name, text)?;
    }
    if cfg.mode != RunMode::Acceptance {
        out.write_json("summary.json", &artifacts.summary)?;
    }
    let manifest = Manifest {
        config: &cfg,
        seed: cfg.seed,
        git_describe: output::git_describe(),
        version: env!("CARGO_PKG_VERSION"),
        started,
        finished: output::now(),
        inputs_hash: output::sha256_hex(&config_text),
        outputs: out.names(),
    };
    out.write_json("manifest.json", &manifest)?;
    println!("wrote {} files to {}", out.names().len(), out.path().display());
    out.commit();
    if artifacts.ok {
        Ok(())
    } else {
        Err(Failure::Criteria)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Criteria) => {
            eprintln!("error: acceptance criteria failed");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Lrep(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
