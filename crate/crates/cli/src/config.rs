//! Run configuration: JSON with a versioned schema, unknown keys rejected,
//! dotted-path overrides from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tdse_core::ansatz::SystemSpec;
use tdse_core::metrics::{Observable, QuadratureSpec};
use tdse_core::objective::HamiltonianKind;
use tdse_core::oracles::AnalyticState;
use tdse_core::persist::sha256_hex;
use tdse_core::sampler::SamplerConfig;
use tdse_core::trainer::{TimeSchedule, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// A benchmark name such as `ho01`, or a full state description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OracleRef {
    Name(String),
    State(AnalyticState),
}

impl OracleRef {
    pub fn resolve(&self) -> Result<AnalyticState> {
        let s = match self {
            Self::Name(n) => AnalyticState::named(n)?,
            Self::State(s) => s.clone(),
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub initial_state: OracleRef,
    /// Defaults to the initial state's particle count.
    #[serde(default)]
    pub n_up: Option<usize>,
    #[serde(default)]
    pub n_down: Option<usize>,
    /// Defaults to the Hamiltonian the initial state belongs to.
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnsatzConfig {
    pub layers: usize,
    pub width_1e: usize,
    pub width_2e: usize,
    pub determinants: usize,
    /// 2 for Gaussian tails, 1 for Coulomb cusps; chosen from the
    /// Hamiltonian when absent.
    pub envelope_exponent: Option<f64>,
    pub phase_hidden: usize,
    pub envelope_hidden: usize,
}

impl Default for AnsatzConfig {
    fn default() -> Self {
        let s = SystemSpec::new(1, 0, HamiltonianKind::harmonic_oscillator());
        Self {
            layers: s.layers,
            width_1e: s.width_1e,
            width_2e: s.width_2e,
            determinants: s.n_determinants,
            envelope_exponent: None,
            phase_hidden: s.phase_hidden,
            envelope_hidden: s.envelope_hidden,
        }
    }
}

fn default_samples() -> usize {
    4096
}

/// Evaluations run after training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricRequest {
    RelL2 {
        #[serde(default)]
        quadrature: QuadratureSpec,
    },
    Observable {
        observable: Observable,
        times: Vec<f64>,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        sampler: SamplerConfig,
    },
}

fn default_schedule() -> TimeSchedule {
    TimeSchedule::Uniform { intervals: 1 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    pub horizon: f64,
    #[serde(default = "default_schedule")]
    pub schedule: TimeSchedule,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub metrics: Vec<MetricRequest>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Seeds parameter initialization and every sampler stream; replaces
    /// `train.seed`.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn initial_state(&self) -> Result<AnalyticState> {
        self.problem.initial_state.resolve()
    }

    pub fn system_spec(&self) -> Result<SystemSpec> {
        let psi0 = self.initial_state()?;
        let h = self.problem.hamiltonian.clone().unwrap_or_else(|| psi0.hamiltonian());
        let n_up = self.problem.n_up.unwrap_or(psi0.n_particles());
        let n_down = self.problem.n_down.unwrap_or(0);
        let a = &self.ansatz;
        let mut spec = SystemSpec::new(n_up, n_down, h).with_sizes(a.layers, a.width_1e, a.width_2e, a.determinants);
        if let Some(p) = a.envelope_exponent {
            spec.envelope_exponent = p;
        }
        spec.phase_hidden = a.phase_hidden;
        spec.envelope_hidden = a.envelope_hidden;
        Ok(spec)
    }

    /// Training settings with the run seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            bail!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema);
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bail!("horizon must be positive, got {}", self.horizon);
        }
        let psi0 = self.initial_state().context("problem.initial_state")?;
        let spec = self.system_spec()?;
        spec.validate().context("ansatz")?;
        if spec.n_coords() != psi0.n_coords() {
            bail!(
                "initial state has {} coordinates but the system has {}",
                psi0.n_coords(),
                spec.n_coords()
            );
        }
        self.train_config().validate().context("train")?;
        tdse_core::trainer::partition_time(self.horizon, &self.schedule).context("schedule")?;
        for (k, m) in self.metrics.iter().enumerate() {
            if let MetricRequest::Observable { times, samples, sampler, .. } = m {
                if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
                    bail!("metrics[{k}]: times must be a non-empty list of finite values");
                }
                if *samples < 20 {
                    bail!("metrics[{k}]: at least 20 samples are needed");
                }
                sampler.validate().with_context(|| format!("metrics[{k}].sampler"))?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            output: None,
            ..self.clone()
        };
        sha256_hex(&serde_json::to_vec(&canonical).expect("config serializes"))
    }
}

/// Sets `path` (dot separated) in `root` to `raw`, read as JSON when it
/// parses and as a string otherwise. Missing objects along the path are
/// created.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("malformed override path {path:?}");
    }
    let mut node = root;
    for (i, key) in keys.iter().enumerate() {
        let last = i + 1 == keys.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(key.to_string(), value);
                    return Ok(());
                }
                map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .with_context(|| format!("override {path:?}: {key:?} indexes a list"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .with_context(|| format!("override {path:?}: index {idx} out of range ({len} items)"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!("override {path:?}: {:?} is not an object", keys[..i].join(".")),
        };
    }
    unreachable!("loop returns on the last key")
}

/// Parses `key.path=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => bail!("override {s:?} is not of the form key.path=value"),
    }
}

pub fn parse_config(text: &str, origin: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    // serde_json reports line and column for syntax and schema errors
    let base: RunConfig = serde_json::from_str(text).with_context(|| format!("invalid config {origin}"))?;
    let cfg = if overrides.is_empty() {
        base
    } else {
        let mut v = serde_json::to_value(&base)?;
        for (k, raw) in overrides {
            apply_override(&mut v, k, raw)?;
        }
        serde_json::from_value(v).with_context(|| format!("invalid config {origin} after overrides"))?
    };
    cfg.validate().with_context(|| format!("invalid config {origin}"))?;
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    parse_config(&text, &path.display().to_string(), overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"schema": 1, "problem": {"initial_state": "ho0"}, "horizon": 1.0}"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL, "test", &[]).unwrap();
        assert_eq!(c.schedule, TimeSchedule::Uniform { intervals: 1 });
        let spec = c.system_spec().unwrap();
        assert_eq!((spec.n_up, spec.n_down, spec.n_coords()), (1, 0, 1));
    }

    #[test]
    fn unknown_key_is_reported_with_its_line() {
        let text = "{\n  \"schema\": 1,\n  \"problem\": {\"initial_state\": \"ho0\"},\n  \"horizon\": 1.0,\n  \"horizn\": 2\n}";
        let msg = format!("{:#}", parse_config(text, "test", &[]).unwrap_err());
        assert!(msg.contains("horizn") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let o = vec![
            ("train.adam.steps".to_string(), "7".to_string()),
            ("problem.initial_state".to_string(), "ho01".to_string()),
            ("schedule".to_string(), r#"{"kind":"uniform","intervals":3}"#.to_string()),
        ];
        let c = parse_config(MINIMAL, "test", &o).unwrap();
        assert_eq!(c.train.adam.steps, 7);
        assert_eq!(c.problem.initial_state, OracleRef::Name("ho01".into()));
        assert_eq!(c.schedule, TimeSchedule::Uniform { intervals: 3 });
    }

    #[test]
    fn overrides_are_validated() {
        let o = vec![("train.weights_first.lambda_r".to_string(), "-1".to_string())];
        assert!(parse_config(MINIMAL, "test", &o).is_err());
        let o = vec![("train.adam.stepz".to_string(), "1".to_string())];
        assert!(parse_config(MINIMAL, "test", &o).is_err());
        assert!(parse_assignment("noequals").is_err());
        let mut v = serde_json::json!({"a": 1});
        assert!(apply_override(&mut v, "a.b", "2").is_err());
    }

    #[test]
    fn hash_ignores_the_output_directory() {
        let a = parse_config(MINIMAL, "test", &[]).unwrap();
        let b = RunConfig {
            output: Some("elsewhere".into()),
            ..a.clone()
        };
        let c = RunConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn inline_states_are_accepted() {
        let text = r#"{"schema": 1, "horizon": 1.0,
            "problem": {"initial_state": {"kind": "ho", "coeffs": [{"n": 0, "c": 0.7071067811865476}, {"n": 1, "c": 0.7071067811865476}]}}}"#;
        let c = parse_config(text, "test", &[]).unwrap();
        let (a, b) = (c.initial_state().unwrap(), AnalyticState::named("ho01").unwrap());
        assert!((a.eval(&[0.3], 0.7) - b.eval(&[0.3], 0.7)).norm() < 1e-15);
    }

    #[test]
    fn mismatched_particle_counts_are_rejected() {
        let o = vec![("problem.n_up".to_string(), "2".to_string())];
        assert!(parse_config(MINIMAL, "test", &o).is_err());
    }
}
