//! Command-line front end: verify one (network, property) pair, sweep a
//! corpus under several ablation modes, trace root-bound optimization, and
//! generate seeded corpora.

pub mod bench;
pub mod bounds;
pub mod gen;
pub mod report;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bab_verify::alpha_opt::OptimizerConfig;
use bab_verify::bab::{self, Status, VerifierConfig};
use bab_verify::model::{load_network, load_property_for, write_json};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use bench::{cmd_bench, BenchArgs, BenchMode, BenchReport};
pub use bounds::{cmd_bounds, BoundsArgs, BoundsTrace};
pub use gen::{cmd_gen, GenArgs};
pub use report::RunReport;

pub const EXIT_VERIFIED: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_TIMEOUT: i32 = 2;
pub const EXIT_INCOMPLETE: i32 = 3;
pub const EXIT_USAGE: i32 = 10;
pub const EXIT_DATA: i32 = 11;
pub const EXIT_CONFIG: i32 = 12;
pub const EXIT_INTERNAL: i32 = 13;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] bab_verify::Error),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bab_verify::Error as E;
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Csv { .. } | CliError::Io { .. } => EXIT_DATA,
            CliError::Core(e) => match e {
                E::Config(_) => EXIT_CONFIG,
                E::LayerDimension { .. }
                | E::Dimension { .. }
                | E::Parse { .. }
                | E::Schema { .. }
                | E::InvalidNetwork(_)
                | E::InvalidProperty(_)
                | E::InvalidBounds { .. }
                | E::Io { .. } => EXIT_DATA,
                _ => EXIT_INTERNAL,
            },
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        CliError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn exit_code(status: &Status) -> i32 {
    match status {
        Status::Verified => EXIT_VERIFIED,
        Status::Falsified { .. } => EXIT_FALSIFIED,
        Status::Timeout => EXIT_TIMEOUT,
        Status::IncompleteModeExhausted => EXIT_INCOMPLETE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "bab-verify", version, about = "Complete ReLU network verification by branch and bound")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify one property; the exit code carries the verdict.
    Verify(VerifyArgs),
    /// Run a corpus under several modes and write per-instance and cactus CSVs.
    Bench(BenchArgs),
    /// Trace root-domain bound optimization against two LP bounds.
    Bounds(BoundsArgs),
    /// Generate a seeded corpus with oracle verdicts.
    Gen(GenArgs),
}

/// Search knobs shared by `verify` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Domains split per iteration.
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    /// Domain count that triggers the LP fallback.
    #[arg(long, default_value_t = 512)]
    pub eta: usize,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 300.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Slope-optimization iterations on the root domain.
    #[arg(long, default_value_t = 100)]
    pub alpha_iters_init: usize,
    /// Slope-optimization iterations on every other domain.
    #[arg(long, default_value_t = 10)]
    pub alpha_iters_node: usize,
    /// Initial step size of the slope optimizer.
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Recorded in the report; the search itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Default for SearchArgs {
    fn default() -> Self {
        Self {
            batch_size: 16,
            eta: 512,
            timeout: 300.0,
            threads: 1,
            alpha_iters_init: 100,
            alpha_iters_node: 10,
            lr: 0.1,
            seed: 0,
        }
    }
}

impl SearchArgs {
    pub fn config(&self) -> VerifierConfig {
        VerifierConfig {
            batch_size: self.batch_size,
            lp_threshold: self.eta,
            timeout: self.timeout,
            thread_count: self.threads,
            initial_opt: OptimizerConfig {
                iterations: self.alpha_iters_init,
                step_size: self.lr,
                ..OptimizerConfig::initial()
            },
            node_opt: OptimizerConfig {
                iterations: self.alpha_iters_node,
                step_size: self.lr,
                ..OptimizerConfig::per_node()
            },
            ..VerifierConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub prop: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Bound every domain with the heuristic slopes only.
    #[arg(long)]
    pub no_alpha_opt: bool,
    /// Split one domain per iteration.
    #[arg(long)]
    pub no_batch: bool,
    /// Never call the LP (the search becomes incomplete).
    #[arg(long)]
    pub no_lp: bool,
    /// LP-check every new domain.
    #[arg(long, conflicts_with = "no_lp")]
    pub lp_every_node: bool,
    /// RunReport JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-domain search events as JSON lines.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long, short)]
    pub quiet: bool,
}

impl VerifyArgs {
    pub fn new(net: impl Into<PathBuf>, prop: impl Into<PathBuf>) -> Self {
        Self {
            net: net.into(),
            prop: prop.into(),
            search: SearchArgs::default(),
            no_alpha_opt: false,
            no_batch: false,
            no_lp: false,
            lp_every_node: false,
            out: None,
            events: None,
            quiet: true,
        }
    }

    pub fn config(&self) -> VerifierConfig {
        VerifierConfig {
            disable_alpha_opt: self.no_alpha_opt,
            force_batch_size_1: self.no_batch,
            disable_lp_fallback: self.no_lp,
            lp_every_node: self.lp_every_node,
            record_events: self.events.is_some(),
            ..self.search.config()
        }
    }
}

/// Loads the inputs, runs the search and writes the requested outputs.
/// Returns the verdict exit code with the report.
pub fn cmd_verify(args: &VerifyArgs) -> CliResult<(i32, RunReport)> {
    let cfg = args.config();
    cfg.validate()?;
    let net = load_network(&args.net)?;
    let prop = load_property_for(&args.prop, &net)?;
    let verdict = bab::verify(&net, &prop, &cfg)?;

    if let Some(path) = &args.events {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for ev in &verdict.events {
            let line = serde_json::to_string(ev).expect("serializable event");
            writeln!(w, "{line}").map_err(|e| CliError::io(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    let report = RunReport::new(&verdict, &cfg, args.search.seed, &args.net, &args.prop);
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    if !args.quiet {
        println!("{}", report.summary());
    }
    Ok((exit_code(&verdict.status), report))
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Verify(a) => cmd_verify(&a).map(|(code, _)| code),
        Command::Bench(a) => cmd_bench(&a).map(|r| {
            println!("{}", r.summary());
            0
        }),
        Command::Bounds(a) => cmd_bounds(&a).map(|t| {
            println!("{}", t.summary());
            0
        }),
        Command::Gen(a) => cmd_gen(&a).map(|p| {
            println!("wrote {}", p.display());
            0
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
