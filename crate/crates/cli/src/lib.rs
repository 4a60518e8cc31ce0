//! Command-line pipeline: data generation, training, evaluation, stability
//! and architecture searches, complexity sweeps and plot data.
//!
//! Every command writes one subdirectory of the output root holding its
//! artifacts, the effective `run_config.json` and a `command.json` naming
//! its inputs. Passing that `run_config.json` back through `--config`
//! reproduces the numerical artifacts byte for byte.

mod commands;
pub mod config;
mod plotdata;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{CasePreset, RunConfig};
pub use plotdata::PlotKind;

/// Error classes with their process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("missing input: {0}")]
    MissingInput(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Compute(_) => 2,
            CliError::MissingInput(_) => 3,
        }
    }
}

impl From<optics_tcn::Error> for CliError {
    fn from(e: optics_tcn::Error) -> Self {
        use optics_tcn::Error as E;
        match &e {
            E::InvalidConfig(m) => CliError::Config(m.clone()),
            E::DimensionTooLarge { .. } => CliError::Config(e.to_string()),
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                CliError::MissingInput(e.to_string())
            }
            _ => CliError::Compute(e.to_string()),
        }
    }
}

pub const DATA_DIR_ENV: &str = "P2R_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "optics-tcn", version, about = "Driven Ising-chain data, causal TCN autoencoders and complexity sweeps")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "runs")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub preset: Option<CasePreset>,
    /// Number of frequencies.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Series length T.
    #[arg(long, global = true)]
    pub t: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Number of sites, taken from the reference chain.
    #[arg(long, global = true)]
    pub sites: Option<usize>,
    #[arg(long, global = true)]
    pub amplitude: Option<f64>,
    /// Model widths in dash notation, e.g. 5-5-3.
    #[arg(long, global = true)]
    pub widths: Option<String>,
    #[arg(long, global = true)]
    pub variational: bool,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Runs per stability protocol.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an input-output data set.
    Generate,
    /// Train one model.
    Train {
        /// Data set directory (default: <out>/dataset).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a trained model on the test split.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Training run directory (default: <out>/train).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train seeded runs of one architecture and apply the stability criterion.
    Stability {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Stability protocol over a grid of architectures.
    ArchSearch {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated widths, e.g. "3-3-2,5-5-3".
        #[arg(long)]
        specs: Option<String>,
    },
    /// Permutation-entropy complexity versus drive amplitude.
    Complexity {
        /// Amplitude-grid data set; simulated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Amplitude count of the sweep.
        #[arg(long)]
        m: Option<usize>,
        /// Extra single-amplitude points, as LABEL=DIR.
        #[arg(long = "extra")]
        extra: Vec<String>,
    },
    /// Emit plot-ready CSV files.
    Plotdata {
        /// r2_vs_omega, pred_vs_target, boxplot or complexity_curve.
        kind: String,
        /// Run directory to read (default depends on the kind).
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Stability { .. } => "stability",
            Command::ArchSearch { .. } => "arch-search",
            Command::Complexity { .. } => "complexity",
            Command::Plotdata { .. } => "plotdata",
        }
    }
}

impl Cli {
    /// Effective configuration for this invocation.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let g = &self.global;
        RunConfig::resolve(g.config.as_deref(), g.preset, |c| {
            if let Some(s) = g.seed {
                c.seed = s;
            }
            if let Some(j) = g.jobs {
                c.jobs = Some(j);
            }
            if let Some(n) = g.n {
                c.data.n = n;
                c.complexity.n = n;
            }
            if let Some(t) = g.t {
                c.time.t_steps = t;
            }
            if let Some(dt) = g.dt {
                c.time.dt = dt;
            }
            if let Some(n) = g.sites {
                c.chain.truncate_reference(n)?;
            }
            if let Some(a) = g.amplitude {
                c.data.amplitude = a;
                c.data.amplitude_grid = None;
            }
            if let Some(w) = &g.widths {
                c.model.widths = w.clone();
            }
            if g.variational {
                c.model.variational = true;
            }
            if let Some(e) = g.epochs {
                c.train.epochs = e;
            }
            if let Some(r) = g.runs {
                c.evaluation.runs = r;
            }
            if let Command::Complexity { m: Some(m), .. } = &self.command {
                c.complexity.m = *m;
            }
            Ok(())
        })
    }
}

/// Parses `args` and runs the command, returning the exit code.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve_config()?;
    optics_tcn::parallel::configure_threads(cfg.jobs);
    let out = &cli.global.out;
    match &cli.command {
        Command::Generate => commands::generate(&cfg, out),
        Command::Train { data } => commands::train(&cfg, out, data.as_deref()),
        Command::Evaluate { data, checkpoint } => {
            commands::evaluate(&cfg, out, data.as_deref(), checkpoint.as_deref())
        }
        Command::Stability { data } => commands::stability(&cfg, out, data.as_deref()),
        Command::ArchSearch { data, specs } => {
            commands::arch_search(&cfg, out, data.as_deref(), specs.as_deref())
        }
        Command::Complexity { data, extra, .. } => {
            commands::complexity(&cfg, out, data.as_deref(), extra)
        }
        Command::Plotdata { kind, run } => {
            let kind: PlotKind = kind.parse()?;
            plotdata::emit(&cfg, out, kind, run.as_deref())
        }
    }
    .map(|()| eprintln!("{} finished", cli.command.name()))
}
