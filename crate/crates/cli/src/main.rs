use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tdse_cli::config::{load_config, parse_assignment};
use tdse_cli::run::{observe_oracle, parse_times, tagged_csv, train, RunStatus, Trained};
use tdse_cli::{selftest, THREADS_ENV};
use tdse_core::metrics::{observable_csv, rel_l2_error, Observable, QuadratureSpec};
use tdse_core::oracles::AnalyticState;
use tdse_core::persist::atomic_write;
use tdse_core::sampler::SamplerConfig;

#[derive(Parser)]
#[command(name = "tdse", version, about = "Neural spacetime TDSE solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a run from a JSON config; resumes an interrupted run in the
    /// same output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a config key, e.g. `--set train.adam.steps=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Relative space-time L2 error of a trained network against an oracle.
    Eval {
        /// Run directory, run manifest or checkpoint manifest.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        oracle: String,
        #[arg(long, default_value = "rel_l2")]
        metric: String,
        /// Defaults to the time range the checkpoint covers.
        #[arg(long)]
        horizon: Option<f64>,
        /// Refuse the checkpoint unless its network matches this config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-time CSV; the summary goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Observable time series of a trained network or, without
    /// `--checkpoint`, of an oracle.
    Observe {
        #[arg(long)]
        observable: String,
        /// `start:end:count` or a comma separated list.
        #[arg(long)]
        times: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long, default_value_t = 4096)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites and print a JSON summary.
    Selftest,
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            overrides,
        } => {
            let mut sets = overrides.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>>>()?;
            if let Some(s) = seed {
                sets.push(("seed".into(), s.to_string()));
            }
            let cfg = load_config(&config, &sets)?;
            let dir = out
                .or_else(|| cfg.output.clone())
                .context("no output directory: pass --out or set \"output\" in the config")?;
            let summary = train(&cfg, &dir)?;
            let m = &summary.manifest;
            println!(
                "{} interval(s) trained ({} resumed), status {:?}, config {}",
                m.intervals.len(),
                summary.resumed,
                m.status,
                m.config_hash
            );
            if m.status != RunStatus::Complete {
                eprintln!("training failed: {}", m.failure.as_deref().unwrap_or("unknown"));
                eprintln!("partial artifacts are in {}", summary.dir.display());
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            checkpoint,
            oracle,
            metric,
            horizon,
            config,
            out,
        } => {
            if metric != "rel_l2" {
                bail!("unknown metric {metric:?}; only rel_l2 is supported");
            }
            let expect = config.map(|p| load_config(&p, &[])?.system_spec()).transpose()?;
            let trained = Trained::load(&checkpoint, expect.as_ref())?;
            let state = AnalyticState::named(&oracle)?;
            let horizon = horizon.unwrap_or(trained.plan.horizon);
            if !horizon.is_finite() {
                bail!("checkpoint has no time range; pass --horizon");
            }
            let rep = rel_l2_error(&trained.solution(), &state, horizon, &QuadratureSpec::default())?;
            if let Some(w) = &rep.warning {
                eprintln!("warning: {w}");
            }
            println!("rel_l2,{:.10e}", rep.rel_l2);
            if let Some(p) = out {
                let csv = match &trained.config_hash {
                    Some(h) => tagged_csv(h, &rep.to_csv()),
                    None => rep.to_csv(),
                };
                atomic_write(&p, csv.as_bytes())?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Observe {
            observable,
            times,
            checkpoint,
            oracle,
            samples,
            seed,
            out,
        } => {
            let obs = Observable::parse(&observable)?;
            let times = parse_times(&times)?;
            let cfg = SamplerConfig::default();
            let (points, hash) = match (checkpoint, oracle) {
                (Some(ck), None) => {
                    let trained = Trained::load(&ck, None)?;
                    (trained.observe(obs, &times, samples, seed, &cfg)?, trained.config_hash)
                }
                (None, Some(name)) => (observe_oracle(&AnalyticState::named(&name)?, obs, &times, samples, seed, &cfg)?, None),
                _ => bail!("pass exactly one of --checkpoint and --oracle"),
            };
            let csv = observable_csv(&points);
            let csv = match hash {
                Some(h) => tagged_csv(&h, &csv),
                None => csv,
            };
            match out {
                Some(p) => atomic_write(&p, csv.as_bytes())?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let summary = selftest::run_all();
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if !summary.passed {
                for s in summary.suites.iter().filter(|s| !s.passed) {
                    for f in &s.failures {
                        eprintln!("{}: {f}", s.name);
                    }
                }
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
