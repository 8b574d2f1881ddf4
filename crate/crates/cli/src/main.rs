//! `scuc`: batch driver for deterministic and risk-aware unit commitment runs.
//!
//! Exit codes: 0 success, 1 solver failure or nonconvergence, 2 input error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use scuc_core::decomposition::{CutFamily, DecompositionMode};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<scuc_core::Error> for Failure {
    fn from(e: scuc_core::Error) -> Self {
        use scuc_core::Error as E;
        match e {
            E::SolverStatus { .. } | E::Solver(_) => Failure::solver(e.to_string()),
            _ => Failure::input(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "scuc", version, about = "Deterministic and risk-aware security-constrained unit commitment")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override keys of the run config.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run config; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    case: Option<PathBuf>,
    #[arg(long, global = true)]
    load_history: Option<PathBuf>,
    #[arg(long, global = true)]
    wind_history: Option<PathBuf>,
    /// Leading modes per uncertainty kind.
    #[arg(short = 'k', long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    r_load: Option<f64>,
    #[arg(long, global = true)]
    r_wind: Option<f64>,
    /// Weight on worst-case consumer exposure.
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Comma-separated cut families: no_good, l_shaped, lbbd.
    #[arg(long, global = true, value_delimiter = ',')]
    cuts: Option<Vec<CutFamily>>,
    /// iterative or branch_and_cut.
    #[arg(long, global = true)]
    mode: Option<DecompositionMode>,
    /// Comma-separated DA hours where commitment may deviate from the deterministic schedule.
    #[arg(long, global = true, value_delimiter = ',')]
    flex_window: Option<Vec<usize>>,
    #[arg(long, global = true)]
    voll_da: Option<f64>,
    #[arg(long, global = true)]
    voll_rt: Option<f64>,
    /// Relative MIP gap.
    #[arg(long, global = true)]
    gap: Option<f64>,
    /// Wall-clock limit in seconds.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid and sample solves; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    backend: Option<String>,
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    n_samples: Option<usize>,
    /// Scenarios in the stochastic benchmark.
    #[arg(long, global = true)]
    n_scenarios: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deterministic DA SCUC plus the fixed-commitment pricing run.
    SolveDa,
    /// Risk-aware SCUC by cut-based decomposition.
    SolveRiskAware,
    /// Worst-case RT consumer exposure of a schedule (deterministic if omitted).
    Adversary {
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Paired out-of-sample evaluation; the first schedule is the comparator.
    Evaluate {
        /// `name=path` to a schedule CSV; repeat for each schedule.
        #[arg(long = "schedule", value_name = "NAME=PATH", required = true)]
        schedules: Vec<String>,
    },
    /// Extensive-form stochastic SCUC on sampled scenarios.
    BenchmarkSto {
        /// Warm-start schedule; defaults to the deterministic one.
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Principal modes, explained variance and grid size of the uncertainty set.
    PcaAudit,
}

impl Overrides {
    fn apply(self, mut cfg: RunConfig) -> RunConfig {
        macro_rules! set {
            ($($flag:ident => $key:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$key = v; })*
            };
        }
        set!(k => k, r_load => r_load, r_wind => r_wind, rho => rho, cuts => cut_families, mode => mode,
             gap => gap, seed => seed, workers => workers, backend => backend, output => output, n_samples => n_samples,
             n_scenarios => n_scenarios);
        if self.case.is_some() {
            cfg.case = self.case;
        }
        if self.load_history.is_some() {
            cfg.load_history = self.load_history;
        }
        if self.wind_history.is_some() {
            cfg.wind_history = self.wind_history;
        }
        if self.flex_window.is_some() {
            cfg.flex_window = self.flex_window;
        }
        if self.voll_da.is_some() {
            cfg.voll_da = self.voll_da;
        }
        if self.voll_rt.is_some() {
            cfg.voll_rt = self.voll_rt;
        }
        if self.time_limit.is_some() {
            cfg.time_limit = self.time_limit;
        }
        cfg
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let base = match &cli.overrides.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = cli.overrides.apply(base);
    cfg.validate()?;
    commands::dispatch(&cli.command, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
