//! Argument parsing, thread setup and exit-code policy.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use weylflow::WeylError;

use crate::config::{self, ExperimentConfig, Task};
use crate::manifest::{self, Manifest};
use crate::{describe, tasks};

/// Exit status for a completed run.
pub const EXIT_OK: i32 = 0;
/// Usage, configuration or I/O failure.
pub const EXIT_USAGE: i32 = 1;
/// A numerical invariant was violated.
pub const EXIT_INVARIANT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "weylflow", version, about = "Phase-space dynamics of open quantum systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Configuration file (TOML, or JSON).
    #[arg(value_name = "CONFIG")]
    pub config_path: Option<PathBuf>,
    #[arg(long = "config", short = 'c', value_name = "CONFIG")]
    pub config: Option<PathBuf>,
    /// Override a key, e.g. `--set evolution.dt=0.005`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory (default `out/<task>`).
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 leaves the choice to rayon.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the task named in the configuration.
    Run(RunArgs),
    /// Print the linear dynamics, grid and stability plan without running.
    Describe(Common),
    EvolveQcf(RunArgs),
    EvolveQpdf(RunArgs),
    Gaussian(RunArgs),
    Invariant(RunArgs),
    Fit(RunArgs),
    Dissipation(RunArgs),
    Classical(RunArgs),
    Kernels(RunArgs),
}

impl Common {
    fn path(&self) -> Result<PathBuf> {
        match (&self.config_path, &self.config) {
            (Some(_), Some(_)) => Err(anyhow!("give the configuration either positionally or with --config, not both")),
            (Some(p), None) | (None, Some(p)) => Ok(p.clone()),
            (None, None) => Err(anyhow!("no configuration file given")),
        }
    }

    fn load(&self, task: Option<Task>) -> Result<ExperimentConfig> {
        let mut overrides = self.set.clone();
        if let Some(t) = task {
            overrides.insert(0, format!("task=\"{}\"", t.name()));
        }
        config::load(&self.path()?, &overrides)
    }
}

/// Failure of a run, tagged with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn classify(error: anyhow::Error) -> Failure {
    let invariant = error.chain().any(|e| {
        matches!(
            e.downcast_ref::<WeylError>(),
            Some(
                WeylError::Invariant(_)
                    | WeylError::Tail(_)
                    | WeylError::SlowDecay(_)
                    | WeylError::NotHurwitz { .. }
                    | WeylError::NotPositiveDefinite(_)
            )
        )
    });
    Failure { code: if invariant { EXIT_INVARIANT } else { EXIT_USAGE }, error }
}

fn resolve_threads(flag: Option<usize>, cfg: &ExperimentConfig) -> Result<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var("WEYLFLOW_THREADS") {
        Ok(v) => v.trim().parse().with_context(|| format!("WEYLFLOW_THREADS={v:?} is not a thread count")),
        Err(_) => Ok(cfg.threads),
    }
}

/// Runs a task and writes its manifest; returns the exit status.
pub fn run(args: &RunArgs, task: Option<Task>) -> std::result::Result<i32, Failure> {
    let usage = |error: anyhow::Error| Failure { code: EXIT_USAGE, error };
    let cfg = args.common.load(task).map_err(usage)?;
    let threads = resolve_threads(args.threads, &cfg).map_err(usage)?;
    if threads > 0 {
        // A pool may already exist when called repeatedly in one process.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::debug!("thread pool already initialised: {e}");
        }
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.task.name()));
    let hash = manifest::config_hash(&cfg).map_err(usage)?;
    log::info!("{} → {} (config {})", cfg.task.name(), out.display(), &hash[..12]);

    let start = Instant::now();
    let result = tasks::run_task(&cfg, &out, &hash);
    let wall = start.elapsed().as_secs_f64();
    let (output, failure) = match result {
        Ok(o) => (o, None),
        Err(e) => {
            let f = classify(e);
            let o = tasks::TaskOutput { summary: serde_json::json!({ "error": format!("{:#}", f.error) }), violations: vec![] };
            (o, Some(f))
        }
    };
    let status = match (&failure, output.violations.is_empty()) {
        (Some(f), _) if f.code == EXIT_INVARIANT => "invariant_violation",
        (Some(_), _) => "error",
        (None, true) => "ok",
        (None, false) => "invariant_violation",
    };
    if out.is_dir() {
        let outputs = manifest::hash_outputs(&out).map_err(usage)?;
        Manifest {
            tool: "weylflow",
            version: env!("CARGO_PKG_VERSION"),
            task: cfg.task.name(),
            status,
            config_hash: &hash,
            seed: cfg.seed,
            threads: rayon::current_num_threads(),
            config: &cfg,
            outputs,
            summary: &output.summary,
            violations: &output.violations,
            wall_time_s: wall,
        }
        .write(&out)
        .map_err(usage)?;
    }
    if let Some(f) = failure {
        return Err(f);
    }
    for v in &output.violations {
        eprintln!("invariant violated: {v}");
    }
    println!("{}", serde_json::to_string_pretty(&output.summary).unwrap_or_default());
    Ok(if output.violations.is_empty() { EXIT_OK } else { EXIT_INVARIANT })
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Describe(common) => match common.load(None).and_then(|cfg| describe::describe(&cfg)) {
            Ok(text) => {
                print!("{text}");
                Ok(EXIT_OK)
            }
            Err(error) => Err(Failure { code: EXIT_USAGE, error }),
        },
        Command::Run(a) => run(a, None),
        Command::EvolveQcf(a) => run(a, Some(Task::EvolveQcf)),
        Command::EvolveQpdf(a) => run(a, Some(Task::EvolveQpdf)),
        Command::Gaussian(a) => run(a, Some(Task::Gaussian)),
        Command::Invariant(a) => run(a, Some(Task::Invariant)),
        Command::Fit(a) => run(a, Some(Task::Fit)),
        Command::Dissipation(a) => run(a, Some(Task::Dissipation)),
        Command::Classical(a) => run(a, Some(Task::Classical)),
        Command::Kernels(a) => run(a, Some(Task::Kernels)),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_errors_map_to_two() {
        let e = anyhow::Error::new(WeylError::Tail("mass at boundary".into()));
        assert_eq!(classify(e).code, EXIT_INVARIANT);
        let e = anyhow::Error::new(WeylError::InvalidInput("bad".into()));
        assert_eq!(classify(e).code, EXIT_USAGE);
        assert_eq!(classify(anyhow!("io")).code, EXIT_USAGE);
    }

    #[test]
    fn help_is_not_an_error() {
        assert_eq!(main_with_args(["weylflow", "--help"]), EXIT_OK);
        assert_eq!(main_with_args(["weylflow", "bogus"]), EXIT_USAGE);
    }
}
