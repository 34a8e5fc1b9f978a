//! `momenta`: run seeded batches of the unified momentum method, check
//! schedule conditions, fit convergence rates and analyze the λ-recursion.
//!
//! Exit codes: 0 on success, 1 when a run diverged or a check failed, 2 on
//! bad input.

mod check;
mod config;
mod lambda_cmd;
mod rates;
mod run;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use momenta::{ConditionSet, Metric, RateClass, Schedule};

use config::{output_root, Loaded};

#[derive(Parser)]
#[command(name = "momenta", version, about = "Unified momentum SGD experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// `dotted.key=value`, resolved from the root or under `params`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Loaded> {
        Loaded::from_path(&self.config, &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory per seed; writes per-seed CSVs and summary.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Seeds 0..N.
        #[arg(long, conflicts_with = "seed_list")]
        seeds: Option<u64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory (default: config output_dir, then $MOMENTA_DEFAULT_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit 0 even if some trajectory diverged.
        #[arg(long)]
        allow_divergence: bool,
    },
    /// Print schedule and parameter condition reports; exit 0 iff they hold.
    Check {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// RM, KWB or Theorem21 (default: inferred from the oracle).
        #[arg(long = "set")]
        condition_set: Option<ConditionSet>,
    },
    /// Iterate lambda_{t+1} = lambda_t / mu_t - 1 and classify the outcome.
    Lambda {
        /// Momentum schedule as JSON.
        #[arg(long)]
        mu: String,
        /// Step-size schedule as JSON.
        #[arg(long, default_value = r#"{"kind":"constant","coefficient":1}"#)]
        alpha: String,
        #[arg(long)]
        lambda0: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        horizon: u64,
        /// Blow-up threshold for decreasing mu.
        #[arg(long, default_value_t = momenta::lambda::LEMMA_A1_THRESHOLD)]
        threshold: f64,
        /// Directory for lambda.csv and verdict.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit decay rates to a batch of run CSVs; exit 0 iff consistent.
    Rates {
        /// Directory written by `momenta run`.
        dir: PathBuf,
        /// J_theta or grad_norm_sq.
        #[arg(long, default_value = "J_theta")]
        metric: Metric,
        #[arg(long)]
        target_lambda: f64,
        /// Fraction of the run used for the fit.
        #[arg(long, default_value_t = 0.8)]
        tail: f64,
    },
    /// Monte-Carlo audit of the configured oracle against its envelope.
    OracleCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 10_000)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo unbiasedness check of the configured block policy.
    BlockCheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 100_000)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn parse_schedule(flag: &str, text: &str) -> Result<Schedule> {
    serde_json::from_str(text).with_context(|| format!("--{flag} is not a valid schedule"))
}

fn status(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            cfg,
            seeds,
            seed_list,
            jobs,
            out,
            allow_divergence,
        } => {
            let mut overrides = cfg.overrides.clone();
            if let Some(list) = seed_list.or_else(|| seeds.map(|n| (0..n).collect())) {
                overrides.push(format!("seeds={}", serde_json::to_string(&list)?));
            }
            let mut raw = config::read_json(&cfg.config)?;
            // `seeds` may be absent from the file; make it resolvable.
            if let Some(m) = raw.as_object_mut() {
                m.entry("seeds").or_insert(serde_json::json!([0]));
            }
            let loaded = Loaded::from_value(raw, &overrides)?;
            if jobs == 0 {
                bail!("--jobs must be at least 1");
            }
            let dir = output_root(out.as_deref(), loaded.config.output_dir.as_deref());
            let summary = run::run_batch(&loaded, &dir, jobs)?;
            eprintln!(
                "wrote {} run(s) to {} ({} diverged)",
                summary.runs.len(),
                dir.display(),
                summary.diverged
            );
            if summary.diverged > 0 && !allow_divergence {
                for r in summary.runs.iter().filter(|r| r.summary.diverged) {
                    eprintln!(
                        "seed {} diverged at step {}",
                        r.summary.seed,
                        r.summary.divergence_step.unwrap_or_default()
                    );
                }
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { cfg, condition_set } => {
            let out = check::check(&cfg.load()?, condition_set)?;
            print_json(&out)?;
            Ok(status(out.pass))
        }
        Command::Lambda {
            mu,
            alpha,
            lambda0,
            horizon,
            threshold,
            out,
        } => {
            let mu = parse_schedule("mu", &mu)?;
            let alpha = parse_schedule("alpha", &alpha)?;
            let result = lambda_cmd::analyze(&mu, &alpha, lambda0, horizon, threshold)?;
            let dir = output_root(out.as_deref(), None);
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let csv = fs::File::create(dir.join("lambda.csv"))?;
            lambda_cmd::write_rows(std::io::BufWriter::new(csv), &result.rows)?;
            let mut text = serde_json::to_string_pretty(&result.verdict)?;
            text.push('\n');
            fs::write(dir.join("verdict.json"), &text)?;
            print!("{text}");
            Ok(status(result.verdict.hypothesis_ok))
        }
        Command::Rates {
            dir,
            metric,
            target_lambda,
            tail,
        } => {
            let out = rates::rates(&dir, metric, target_lambda, tail)?;
            print_json(&out)?;
            Ok(status(out.aggregate.classification == RateClass::ORateConsistent))
        }
        Command::OracleCheck {
            cfg,
            points,
            replications,
            seed,
        } => {
            let audits = check::oracle_check(&cfg.load()?, points, replications, seed)?;
            print_json(&audits)?;
            Ok(status(audits.iter().all(|a| a.pass)))
        }
        Command::BlockCheck { cfg, replications, seed } => {
            let result = check::block_check(&cfg.load()?, replications, seed)?;
            print_json(&result)?;
            Ok(status(result.pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
