//! `gaussdeconv`: solve `(δ − J) ∗ G = g`, check kernel assumptions, validate
//! the Gaussian asymptotics and run the self-repellent Brownian motion
//! Monte Carlo.
//!
//! Every run writes its outputs and a `manifest.toml` with the resolved
//! configuration into `--out`; `rerun` replays a manifest. Exit codes: 0 on
//! success, 2 when a validation criterion fails, 1 on usage or config errors.

mod commands;
mod config;
mod manifest;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::{execute, Outcome};
use config::{load, ProblemConfig, SrbmRunConfig, SrbmTask, WalkConfig};
use manifest::{Manifest, RunSpec};
use output::OutputDir;

#[derive(Parser, Debug)]
#[command(name = "gaussdeconv", version, about = "Gaussian deconvolution of critical convolution equations")]
struct Cli {
    /// Worker threads (outputs do not depend on it)
    #[arg(long, global = true, env = "GAUSSDECONV_THREADS")]
    threads: Option<usize>,

    /// Master seed for Monte Carlo runs
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, default_value = "gaussdeconv-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// TOML configuration file
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Commands {
    /// Check moment, criticality and infrared conditions on (J, g)
    CheckAssumptions(ConfigArg),
    /// Evaluate the Gaussian-walk two-point function C
    WalkC {
        /// TOML configuration file (instead of the flags below)
        #[arg(long, short, conflicts_with_all = ["sigma", "dim", "point"])]
        config: Option<PathBuf>,
        /// Diagonal of Σ, comma-separated
        #[arg(long, value_delimiter = ',', conflicts_with = "dim")]
        sigma: Option<Vec<f64>>,
        /// Dimension for Σ = Id
        #[arg(long)]
        dim: Option<usize>,
        /// Evaluation point, comma-separated; repeat for several (default: origin)
        #[arg(long)]
        point: Vec<String>,
        /// Relative tolerance of the series
        #[arg(long, default_value_t = 1e-10)]
        rel_tol: f64,
    },
    /// Solve for H = G − g at the configured points
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        /// Allow Ĵ(0) < 1 and invert Ĥ directly
        #[arg(long)]
        subcritical: bool,
    },
    /// Evaluate H with an independent oracle (direct quadrature or Neumann series)
    Oracle(ConfigArg),
    /// Compare normalized prefactors along directions with the predicted amplitude
    ValidateAsymptotics(ConfigArg),
    /// Self-repellent Brownian motion Monte Carlo
    Srbm {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the task in the config
        #[arg(long, value_enum)]
        task: Option<SrbmTask>,
    },
    /// Re-run a manifest written by an earlier run
    Rerun {
        /// Path to manifest.toml
        manifest: PathBuf,
    },
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("`--point {text}`: `{s}` is not a number"))
        })
        .collect()
}

fn walk_config(
    config: Option<&Path>,
    sigma: Option<Vec<f64>>,
    dim: Option<usize>,
    points: &[String],
    rel_tol: f64,
) -> Result<WalkConfig> {
    if let Some(path) = config {
        return load(path);
    }
    let sigma = match (sigma, dim) {
        (Some(s), _) => s,
        (None, Some(d)) => vec![1.0; d],
        (None, None) => bail!("`walk-c` needs `--config`, `--sigma` or `--dim`"),
    };
    Ok(WalkConfig {
        rel_tol,
        sigma,
        points: points.iter().map(|p| parse_point(p)).collect::<Result<_>>()?,
    })
}

/// Resolve the subcommand and flags into a self-contained run description.
fn resolve(cli: &Cli) -> Result<RunSpec> {
    let seed_unused = |name: &str| {
        if cli.seed.is_some() {
            eprintln!("warning: --seed has no effect on `{name}`");
        }
    };
    let run = match &cli.command {
        Commands::CheckAssumptions(c) => RunSpec::CheckAssumptions(load::<ProblemConfig>(&c.config)?),
        Commands::WalkC {
            config,
            sigma,
            dim,
            point,
            rel_tol,
        } => RunSpec::WalkC(walk_config(
            config.as_deref(),
            sigma.clone(),
            *dim,
            point,
            *rel_tol,
        )?),
        Commands::Solve {
            config,
            subcritical,
        } => {
            let mut cfg: ProblemConfig = load(&config.config)?;
            cfg.solver.subcritical |= subcritical;
            RunSpec::Solve(cfg)
        }
        Commands::Oracle(c) => RunSpec::Oracle(load(&c.config)?),
        Commands::ValidateAsymptotics(c) => RunSpec::ValidateAsymptotics(load(&c.config)?),
        Commands::Srbm { config, task } => {
            let mut cfg: SrbmRunConfig = load(&config.config)?;
            if let Some(seed) = cli.seed {
                cfg.model.seed = seed;
            }
            if let Some(task) = task {
                cfg.task = *task;
            }
            return Ok(RunSpec::Srbm(cfg));
        }
        Commands::Rerun { .. } => unreachable!("rerun is resolved from its manifest"),
    };
    seed_unused(run.name());
    Ok(run)
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("`--threads` must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Outcome> {
    let (spec, threads) = match &cli.command {
        Commands::Rerun { manifest } => {
            let m = Manifest::read(manifest)?;
            if cli.seed.is_some() {
                eprintln!("warning: --seed is ignored by `rerun`; the manifest fixes the seed");
            }
            (m.run, cli.threads.or(m.threads))
        }
        _ => (resolve(cli)?, cli.threads),
    };
    configure_threads(threads)?;
    let mut out = OutputDir::create(&cli.out)?;
    let outcome = execute(&spec, &mut out)?;
    let manifest = Manifest::new(spec, threads, out.written().to_vec());
    manifest.write(out.root())?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
