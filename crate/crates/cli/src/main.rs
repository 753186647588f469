//! Experiment runner: configuration resolution, dispatch, exit codes.
//!
//! Exit status: 0 when the run completed (check failures are data in the
//! summary, not a crash), 2 for configuration errors, 3 for internal
//! numerical faults.

mod config;
mod run;

use clap::{Args, Parser, Subcommand};
use config::ExperimentConfig;
use heatlab::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "heatlab",
    version,
    about = "Simulation and verification laboratory for a stochastic heat equation \
             with multiplicative space-time white noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the corresponding
/// configuration key.
#[derive(Args, Default)]
struct Common {
    /// TOML experiment configuration; missing keys take documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for manifest, tables, and summary.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Master seed of the counter RNG family.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo path budget.
    #[arg(long)]
    paths: Option<usize>,
    /// Path budget for the variance anchor and its fault drill.
    #[arg(long)]
    anchor_paths: Option<usize>,
    /// Interior spatial resolution.
    #[arg(long)]
    n_x: Option<usize>,
    /// Time steps on (0, horizon].
    #[arg(long)]
    n_t: Option<usize>,
    /// Time horizon T.
    #[arg(long)]
    horizon: Option<f64>,
    /// Rayon worker cap (default: HEATLAB_WORKERS, then all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Double the grid resolution once before running.
    #[arg(long)]
    refine: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.run.master_seed = v;
        }
        if let Some(v) = self.paths {
            cfg.run.paths = v;
        }
        if let Some(v) = self.anchor_paths {
            cfg.run.anchor_paths = v;
        }
        if let Some(v) = self.n_x {
            cfg.grid.n_x = v;
        }
        if let Some(v) = self.n_t {
            cfg.grid.n_t = v;
        }
        if let Some(v) = self.horizon {
            cfg.grid.horizon = v;
        }
        if let Some(v) = self.workers {
            cfg.run.workers = v;
        }
        if let Some(path) = &self.output {
            cfg.run.output = path.to_string_lossy().into_owned();
        }
        if self.refine {
            cfg.run.refine = true;
        }
        cfg.apply_refine();
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one noise path of the configured model and write its trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Path index within the seeded family.
        #[arg(long)]
        path: Option<u64>,
        /// Also write the final profile as an SVG curve.
        #[arg(long)]
        plot: bool,
    },
    /// Iterate the solution map from zero and tabulate difference norms.
    Picard {
        #[command(flatten)]
        common: Common,
        /// Number of Picard iterates to difference.
        #[arg(long)]
        iters: Option<usize>,
        /// Weight rate override (default: 4·K_b from the drift envelope).
        #[arg(long)]
        beta: Option<f64>,
        /// Also write the log-norm curve as an SVG.
        #[arg(long)]
        plot: bool,
    },
    /// Deterministic kernel-inequality sweeps.
    VerifyLemmas {
        #[command(flatten)]
        common: Common,
        /// Comma-separated check names; default runs all seven.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Ensemble checks against oracles, scaling laws, and order relations.
    VerifyStochastic {
        #[command(flatten)]
        common: Common,
        /// Comma-separated check names; default runs the full battery.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Append the fault-injection drills.
        #[arg(long)]
        with_faults: bool,
    },
    /// Coupled-path ordering experiment.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Initial-data perturbation response experiment.
    Stability {
        #[command(flatten)]
        common: Common,
    },
    /// Weighted small-time decay experiment with the singular profile.
    Decay {
        #[command(flatten)]
        common: Common,
    },
    /// Small-time L² continuity experiment.
    L2Continuity {
        #[command(flatten)]
        common: Common,
    },
    /// Print the documented default configuration file.
    Schema,
}

fn dispatch(command: &Command) -> Result<()> {
    let (cfg, name): (ExperimentConfig, &str) = match command {
        Command::Schema => {
            print!("{}", config::SCHEMA);
            return Ok(());
        }
        Command::Simulate { common, path, plot } => {
            let mut cfg = common.resolve()?;
            if let Some(p) = path {
                cfg.run.path_index = *p;
            }
            cfg.run.plot |= plot;
            (cfg, "simulate")
        }
        Command::Picard { common, iters, beta, plot } => {
            let mut cfg = common.resolve()?;
            if let Some(n) = iters {
                cfg.picard.iters = *n;
            }
            if beta.is_some() {
                cfg.picard.beta = *beta;
            }
            cfg.run.plot |= plot;
            (cfg, "picard")
        }
        Command::VerifyLemmas { common, only } => {
            let mut cfg = common.resolve()?;
            if !only.is_empty() {
                cfg.verify.only = only.clone();
            }
            (cfg, "verify-lemmas")
        }
        Command::VerifyStochastic { common, only, with_faults } => {
            let mut cfg = common.resolve()?;
            if !only.is_empty() {
                cfg.verify.only = only.clone();
            }
            cfg.verify.with_faults |= with_faults;
            (cfg, "verify-stochastic")
        }
        Command::Compare { common } => (common.resolve()?, "compare"),
        Command::Stability { common } => (common.resolve()?, "stability"),
        Command::Decay { common } => (common.resolve()?, "decay"),
        Command::L2Continuity { common } => (common.resolve()?, "l2-continuity"),
    };

    run::init_workers(&cfg)?;
    let out = run::OutDir::create(Path::new(&cfg.run.output))?;
    match name {
        "simulate" => run::simulate(&cfg, &out),
        "picard" => run::picard(&cfg, &out),
        "verify-lemmas" => run::verify_lemmas(&cfg, &out),
        "verify-stochastic" => run::verify_stochastic(&cfg, &out),
        other => run::single_check(&cfg, &out, other),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
