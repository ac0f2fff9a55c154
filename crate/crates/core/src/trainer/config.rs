use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::objective::LossWeights;
use crate::sampler::SamplerConfig;

/// Adam with linear warmup and exponential decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub steps: usize,
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub decay_rate: f64,
    /// Steps over which the rate decays by one factor of `decay_rate`.
    pub decay_period: f64,
    pub n_slices: usize,
    pub walkers_per_slice: usize,
    pub resample_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            base_lr: 1e-3,
            warmup_steps: 100,
            decay_rate: 0.5,
            decay_period: 1000.0,
            n_slices: 16,
            walkers_per_slice: 256,
            resample_every: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// L-BFGS rounds, each on a freshly drawn and frozen batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsConfig {
    pub outer_rounds: usize,
    pub steps_per_round: usize,
    pub history_size: usize,
    /// Walkers per slice relative to the Adam stage.
    pub batch_factor: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            outer_rounds: 5,
            steps_per_round: 50,
            history_size: 10,
            batch_factor: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    pub clip_threshold: f64,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub weights_first: LossWeights,
    pub weights_continuation: LossWeights,
    /// Walkers drawn from the initial state for the initial-condition term.
    pub initial_points: usize,
    /// Points drawn once per interval boundary for the continuity penalties.
    pub boundary_points: usize,
    /// An interval fails if its final residual loss exceeds this.
    pub convergence_gate: f64,
    /// Residual winsorization width in MADs; `null` (the default) keeps
    /// every residual.
    pub winsor_mads: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
            clip_threshold: 10.0,
            seed: 0,
            sampler: SamplerConfig::default(),
            weights_first: LossWeights::first_interval(),
            weights_continuation: LossWeights::continuation(),
            initial_points: 256,
            boundary_points: 512,
            convergence_gate: 1e-4,
            winsor_mads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        let l = &self.lbfgs;
        let counts = [
            ("adam.n_slices", a.n_slices),
            ("adam.walkers_per_slice", a.walkers_per_slice),
            ("adam.resample_every", a.resample_every),
            ("lbfgs.history_size", l.history_size),
            ("lbfgs.batch_factor", l.batch_factor),
            ("initial_points", self.initial_points),
            ("boundary_points", self.boundary_points),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(a.base_lr > 0.0 && a.decay_rate > 0.0 && a.decay_period > 0.0) {
            return Err(invalid("adam rates and decay period must be positive"));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(invalid("adam betas must lie in [0, 1) and epsilon be positive"));
        }
        if !(self.clip_threshold > 0.0) {
            return Err(invalid(format!("clip_threshold must be positive, got {}", self.clip_threshold)));
        }
        if self.winsor_mads.is_some_and(|k| !(k > 0.0)) {
            return Err(invalid("winsor_mads must be positive when set"));
        }
        if !(self.convergence_gate > 0.0) {
            return Err(invalid("convergence_gate must be positive"));
        }
        self.weights_first.validate()?;
        self.weights_continuation.validate()?;
        self.sampler.validate()
    }
}
