use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use privreg::audit::{run_audit, AuditRequest};
use privreg::config::ExperimentSpec;
use privreg::experiment::run_experiment_with_jobs;
use privreg::report::{emit_report, Format};
use privreg::ConfigError;
use privreg_core::schedule::{corollary_schedule, ScheduleInputs};

/// Simulate and audit truthful private linear-regression mechanisms.
#[derive(Debug, Parser)]
#[command(name = "privreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the mechanism configuration the rate schedule picks for `n`.
    Schedule {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long = "bound-b", default_value_t = 1.0)]
        bound_b: f64,
        #[arg(long = "half-width-m", default_value_t = 1.0)]
        half_width_m: f64,
        /// Pareto tail exponent of the privacy costs.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Response noise variance; defaults to uniform noise, M²/3.
        #[arg(long)]
        sigma2: Option<f64>,
    },
    /// Sensitivity and density-ratio audits on random neighbouring worlds.
    Audit {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 10.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long = "bound-b", default_value_t = 1.0)]
        bound_b: f64,
        #[arg(long = "half-width-m", default_value_t = 1.0)]
        half_width_m: f64,
        /// Players changed between neighbouring worlds.
        #[arg(long, default_value_t = 1)]
        changed: usize,
        /// Write the JSON record here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a Monte Carlo experiment described by a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
    BoundViolated,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.into())
    }
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Runtime),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn jobs_or_default(jobs: Option<usize>) -> Result<usize, Failure> {
    match jobs {
        Some(0) => Err(Failure::Validation(anyhow::anyhow!("--jobs must be at least 1"))),
        Some(j) => Ok(j),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Schedule {
            n,
            delta,
            bound_b,
            half_width_m,
            p,
            d,
            sigma2,
        } => {
            let inputs = ScheduleInputs {
                d,
                delta,
                bound_b,
                half_width_m,
                sigma2: sigma2.unwrap_or(half_width_m * half_width_m / 3.0),
                p,
            };
            let config = corollary_schedule(n, &inputs).map_err(ConfigError::from)?;
            let mut text = serde_json::to_string_pretty(&config).map_err(|e| Failure::Runtime(e.into()))?;
            text.push('\n');
            write_output(None, &text)
        }
        Command::Audit {
            trials,
            n,
            d,
            gamma,
            seed,
            epsilon,
            bound_b,
            half_width_m,
            changed,
            out,
            jobs,
        } => {
            let req = AuditRequest {
                trials,
                n,
                d,
                gamma,
                epsilon,
                bound_b,
                half_width_m,
                changed,
                seed,
            };
            req.validate()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs_or_default(jobs)?)
                .build()
                .map_err(|e| Failure::Runtime(e.into()))?;
            let output = pool.install(|| run_audit(&req))?;
            let mut text = serde_json::to_string_pretty(&output).map_err(|e| Failure::Runtime(e.into()))?;
            text.push('\n');
            write_output(out.as_ref(), &text)?;
            if output.violated() {
                return Err(Failure::BoundViolated);
            }
            Ok(())
        }
        Command::Experiment {
            config,
            out,
            format,
            seed,
            jobs,
        } => {
            let mut spec = ExperimentSpec::load(&config)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let path = out.or_else(|| spec.out.clone()).ok_or_else(|| {
                Failure::Validation(anyhow::anyhow!("no output path: pass --out or set `out` in the config"))
            })?;
            for w in spec.warnings() {
                eprintln!("warning: {w}");
            }
            let report = run_experiment_with_jobs(&spec, jobs_or_default(jobs)?)?;
            for q in &report.quarantined {
                eprintln!(
                    "quarantined: n = {}, trial {:?}, player {:?}: {}",
                    q.n, q.trial, q.player, q.error
                );
            }
            emit_report(&report, format, &path)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(Failure::Runtime)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::BoundViolated) => {
            eprintln!("audit found bound violations");
            ExitCode::from(2)
        }
    }
}
