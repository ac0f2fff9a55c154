//! Training runs on disk: checkpoints per interval, the training log, a
//! run manifest, and resumption.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use tdse_core::ansatz::{init_params, load_checkpoint, load_checkpoint_for, save_checkpoint, FastNet, NetworkParams, ParamLayout, SystemSpec};
use tdse_core::metrics::{mc_observable, observable_csv, rel_l2_error, NetworkState, Observable, ObservablePoint};
use tdse_core::objective::Penalties;
use tdse_core::oracles::AnalyticState;
use tdse_core::persist::atomic_write;
use tdse_core::sampler::{NetworkDensity, SamplerConfig};
use tdse_core::trainer::{
    partition_time, pretrain_sequence, Interval, IntervalPlan, PiecewiseSolution, Problem, TrainedInterval, TrainingLog,
    LOG_HEADER,
};

use crate::config::{MetricRequest, RunConfig};

pub const RUN_FORMAT: &str = "tdse-run/1";
pub const MANIFEST: &str = "manifest.json";
pub const LOG_CSV: &str = "train_log.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub index: usize,
    pub interval: Interval,
    /// Checkpoint manifest, relative to the run directory.
    pub checkpoint: String,
    pub final_residual: f64,
    pub penalties: Option<Penalties>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub spec: SystemSpec,
    pub plan: IntervalPlan,
    pub intervals: Vec<IntervalRecord>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("malformed run manifest {}", path.display()))?;
        if m.format != RUN_FORMAT {
            bail!("{} is not a run manifest (format {:?})", path.display(), m.format);
        }
        Ok(m)
    }

    fn save(&self, dir: &Path) -> tdse_core::Result<()> {
        atomic_write(&dir.join(MANIFEST), serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(())
    }
}

/// Prefixes CSV text with a comment line naming the config it came from.
pub fn tagged_csv(hash: &str, csv: &str) -> String {
    format!("# config_hash={hash}\n{csv}")
}

fn log_rows(csv: &str) -> impl Iterator<Item = &str> {
    csv.lines().filter(|l| !l.starts_with('#') && *l != LOG_HEADER)
}

pub struct TrainSummary {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub resumed: usize,
}

/// Trains `cfg` into `dir`. An existing run of the same config there is
/// resumed after its last completed interval.
pub fn train(cfg: &RunConfig, dir: &Path) -> Result<TrainSummary> {
    let hash = cfg.hash();
    let psi0 = cfg.initial_state()?;
    let spec = cfg.system_spec()?;
    let tc = cfg.train_config();
    let plan = partition_time(cfg.horizon, &cfg.schedule)?;
    let net = FastNet::new(&spec)?;
    let hamiltonian = spec.hamiltonian.clone();
    let anchors = spec.anchors();
    fs::create_dir_all(dir.join("checkpoints")).with_context(|| format!("cannot create {}", dir.display()))?;

    let mut completed = Vec::new();
    let mut old_rows = String::new();
    let mut manifest = match RunManifest::load(dir) {
        Ok(m) => {
            if m.config_hash != hash {
                bail!(
                    "{} holds a run of a different config (hash {}, this config {hash}); choose another output directory",
                    dir.display(),
                    m.config_hash
                );
            }
            for r in &m.intervals {
                let ck = load_checkpoint_for(&dir.join(&r.checkpoint), &spec)?;
                completed.push(TrainedInterval {
                    index: r.index,
                    interval: r.interval,
                    params: ck.params.data,
                    final_residual: r.final_residual,
                    penalties: r.penalties,
                });
            }
            if let Ok(text) = fs::read_to_string(dir.join(LOG_CSV)) {
                for l in log_rows(&text) {
                    // rows of an interval that did not complete are retrained
                    let iv: usize = l.split(',').next().and_then(|s| s.parse().ok()).unwrap_or(usize::MAX);
                    if iv < completed.len() {
                        old_rows.push_str(l);
                        old_rows.push('\n');
                    }
                }
            }
            RunManifest {
                status: RunStatus::Running,
                failure: None,
                ..m
            }
        }
        Err(_) if !dir.join(MANIFEST).exists() => RunManifest {
            format: RUN_FORMAT.into(),
            config_hash: hash.clone(),
            seed: cfg.seed,
            code_version: env!("CARGO_PKG_VERSION").into(),
            status: RunStatus::Running,
            failure: None,
            spec: spec.clone(),
            plan: plan.clone(),
            intervals: Vec::new(),
        },
        Err(e) => return Err(e),
    };
    let resumed = completed.len();
    manifest.save(dir)?;
    atomic_write(&dir.join("config.json"), serde_json::to_string_pretty(cfg)?.as_bytes())?;
    if resumed > 0 {
        log::info!("resuming after {resumed} completed interval(s)");
    }

    let write_log = |log: &TrainingLog| -> Result<()> {
        let mut csv = String::from(LOG_HEADER);
        csv.push('\n');
        csv.push_str(&old_rows);
        csv.extend(log_rows(&log.to_csv()).map(|l| format!("{l}\n")));
        atomic_write(&dir.join(LOG_CSV), tagged_csv(&hash, &csv).as_bytes())?;
        Ok(())
    };

    let init = init_params(&spec, cfg.seed)?.data;
    let problem = Problem {
        program: &net,
        hamiltonian: &hamiltonian,
        anchors: &anchors,
    };
    let mut log = TrainingLog::default();
    let mut records = manifest.intervals.clone();
    let result = pretrain_sequence(problem, &plan, &psi0, &tc, init, completed, &mut log, |done| {
        let stem = format!("interval_{:03}", done.index);
        let params = NetworkParams::from_vec(ParamLayout::for_spec(&spec), done.params.clone())?;
        let range = Some((done.interval.start, done.interval.end));
        save_checkpoint(&dir.join("checkpoints"), &stem, &spec, &params, cfg.seed, Some(hash.clone()), range)?;
        records.push(IntervalRecord {
            index: done.index,
            interval: done.interval,
            checkpoint: format!("checkpoints/{stem}.json"),
            final_residual: done.final_residual,
            penalties: done.penalties,
        });
        // keep the manifest current so an interrupted run resumes here
        RunManifest {
            intervals: records.clone(),
            ..manifest.clone()
        }
        .save(dir)?;
        log::info!(
            "interval {} done: residual {:.3e}, penalties {:?}",
            done.index,
            done.final_residual,
            done.penalties
        );
        Ok(())
    });
    manifest.intervals = records;
    write_log(&log)?;
    match result {
        Ok(outcome) => {
            manifest.failure = outcome.failure.clone();
            manifest.status = if outcome.failure.is_some() {
                RunStatus::Failed
            } else {
                RunStatus::Complete
            };
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.failure = Some(e.to_string());
        }
    }
    manifest.save(dir)?;
    if manifest.status == RunStatus::Complete {
        run_metrics(cfg, &manifest, dir)?;
    }
    Ok(TrainSummary {
        dir: dir.to_path_buf(),
        manifest,
        resumed,
    })
}

/// A trained network, either a whole run or a single checkpoint.
pub struct Trained {
    pub spec: SystemSpec,
    pub net: FastNet,
    pub plan: IntervalPlan,
    pub params: Vec<Vec<f64>>,
    pub config_hash: Option<String>,
}

impl Trained {
    /// Accepts a run directory, a run manifest, or a checkpoint manifest.
    /// With `expect`, refuses networks whose spec differs.
    pub fn load(path: &Path, expect: Option<&SystemSpec>) -> Result<Self> {
        if !path.exists() {
            bail!("checkpoint {} does not exist", path.display());
        }
        let run_dir = if path.is_dir() {
            Some(path.to_path_buf())
        } else if path.file_name().is_some_and(|n| n == MANIFEST) {
            path.parent().map(Path::to_path_buf)
        } else {
            None
        };
        let check = |spec: &SystemSpec| -> Result<()> {
            match expect {
                Some(want) if want != spec => {
                    let diff = tdse_core::ansatz::shape_diff(
                        &ParamLayout::for_spec(want).tensors,
                        &ParamLayout::for_spec(spec).tensors,
                    );
                    if diff.is_empty() {
                        bail!("checkpoint system differs from the requested one");
                    }
                    bail!("checkpoint does not match the requested ansatz: {diff}")
                }
                _ => Ok(()),
            }
        };
        if let Some(dir) = run_dir {
            let m = RunManifest::load(&dir)?;
            check(&m.spec)?;
            if m.intervals.is_empty() {
                bail!("run {} has no completed intervals", dir.display());
            }
            let mut params = Vec::new();
            for r in &m.intervals {
                let ck = load_checkpoint_for(&dir.join(&r.checkpoint), &m.spec)?;
                if ck.manifest.config_hash.as_deref() != Some(m.config_hash.as_str()) {
                    bail!("{} was written by a different config", r.checkpoint);
                }
                params.push(ck.params.data);
            }
            // a partial run answers only for the intervals it has
            let mut plan = m.plan.clone();
            plan.intervals.truncate(params.len());
            if let Some(last) = plan.intervals.last() {
                plan.horizon = plan.horizon.min(last.end);
            }
            let net = FastNet::new(&m.spec)?;
            return Ok(Self {
                spec: m.spec,
                net,
                plan,
                params,
                config_hash: Some(m.config_hash),
            });
        }
        let ck = load_checkpoint(path)?;
        check(&ck.manifest.spec)?;
        let (t0, t1) = ck.manifest.time_range.unwrap_or((0.0, f64::INFINITY));
        let plan = IntervalPlan {
            horizon: t1,
            intervals: vec![Interval {
                start: t0,
                core_end: t1,
                end: t1,
                first: true,
            }],
        };
        let net = FastNet::new(&ck.manifest.spec)?;
        Ok(Self {
            spec: ck.manifest.spec,
            net,
            plan,
            params: vec![ck.params.data],
            config_hash: ck.manifest.config_hash,
        })
    }

    pub fn solution(&self) -> PiecewiseSolution<'_> {
        PiecewiseSolution {
            program: &self.net,
            plan: self.plan.clone(),
            params: self.params.clone(),
        }
    }

    pub fn observe(
        &self,
        observable: Observable,
        times: &[f64],
        samples: usize,
        seed: u64,
        sampler: &SamplerConfig,
    ) -> Result<Vec<ObservablePoint>> {
        let anchors = self.spec.anchors();
        let d = self.spec.d();
        let h = &self.spec.hamiltonian;
        let density = |k: usize| NetworkDensity {
            program: &self.net,
            params: &self.params[k],
            hamiltonian: Some(h),
        };
        if observable == Observable::Overlap {
            let k0 = self.plan.interval_for(0.0);
            let sol = self.solution();
            return Ok(mc_observable(&density(k0), &sol, &anchors, d, observable, times, samples, seed, sampler)?);
        }
        let mut out = Vec::with_capacity(times.len());
        for (j, &t) in times.iter().enumerate() {
            let k = self.plan.interval_for(t);
            let state = NetworkState {
                program: &self.net,
                params: &self.params[k],
            };
            let seed_t = seed.wrapping_add(j as u64);
            out.extend(mc_observable(&density(k), &state, &anchors, d, observable, &[t], samples, seed_t, sampler)?);
        }
        Ok(out)
    }
}

/// Observables of a closed-form state. The fermion monopole is exact.
pub fn observe_oracle(
    state: &AnalyticState,
    observable: Observable,
    times: &[f64],
    samples: usize,
    seed: u64,
    sampler: &SamplerConfig,
) -> Result<Vec<ObservablePoint>> {
    if let (AnalyticState::FermionScaling { n_particles, omega0, omega_f, g0 }, Observable::Monopole) = (state, observable) {
        return times
            .iter()
            .map(|&t| {
                Ok(ObservablePoint {
                    t,
                    value: tdse_core::oracles::monopole_ref(t, *n_particles, *omega0, *omega_f, *g0)?,
                    stderr: 0.0,
                    imag: 0.0,
                    imag_stderr: 0.0,
                })
            })
            .collect();
    }
    let anchors = match state.hamiltonian().nuclei() {
        [] => vec![vec![0.0; state.dimension()]],
        nuclei => nuclei.iter().map(|n| n.position.clone()).collect(),
    };
    let density = tdse_core::sampler::OracleDensity { state };
    Ok(mc_observable(&density, state, &anchors, state.dimension(), observable, times, samples, seed, sampler)?)
}

fn run_metrics(cfg: &RunConfig, manifest: &RunManifest, dir: &Path) -> Result<()> {
    if cfg.metrics.is_empty() {
        return Ok(());
    }
    let trained = Trained::load(dir, Some(&manifest.spec))?;
    let hash = &manifest.config_hash;
    for (k, m) in cfg.metrics.iter().enumerate() {
        match m {
            MetricRequest::RelL2 { quadrature } => {
                let psi0 = cfg.initial_state()?;
                let rep = rel_l2_error(&trained.solution(), &psi0, cfg.horizon, quadrature)?;
                if let Some(w) = &rep.warning {
                    log::warn!("{w}");
                }
                log::info!("rel_l2 {:.4e}", rep.rel_l2);
                atomic_write(&dir.join(format!("metric_{k}_rel_l2.csv")), tagged_csv(hash, &rep.to_csv()).as_bytes())?;
                atomic_write(
                    &dir.join(format!("metric_{k}_rel_l2.json")),
                    serde_json::to_string_pretty(&serde_json::json!({
                        "rel_l2": rep.rel_l2,
                        "warning": rep.warning,
                        "config_hash": hash,
                    }))?
                    .as_bytes(),
                )?;
            }
            MetricRequest::Observable {
                observable,
                times,
                samples,
                sampler,
            } => {
                let pts = trained.observe(*observable, times, *samples, cfg.seed, sampler)?;
                let name = serde_json::to_value(observable)?.as_str().unwrap_or("observable").to_string();
                atomic_write(&dir.join(format!("metric_{k}_{name}.csv")), tagged_csv(hash, &observable_csv(&pts)).as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Parses `a:b:n` (n evenly spaced points from a to b inclusive) or a comma
/// separated list.
pub fn parse_times(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let times = match parts.as_slice() {
        [a, b, n] => {
            let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
            let n: usize = n.trim().parse()?;
            match n {
                0 => bail!("time grid {s:?} has no points"),
                1 => vec![a],
                _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
            }
        }
        [list] => list
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad time {x:?}: {e}")))
            .collect::<Result<_>>()?,
        _ => bail!("time grid {s:?} is neither start:end:count nor a comma list"),
    };
    if times.is_empty() || times.iter().any(|t: &f64| !t.is_finite()) {
        bail!("time grid {s:?} must hold finite values");
    }
    Ok(times)
}
