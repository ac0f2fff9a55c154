use std::collections::VecDeque;
use std::time::Instant;

use crate::autodiff::ParamGradient;
use crate::error::{Error, Result};

use super::config::{AdamConfig, LbfgsConfig};

/// Individual loss terms of one evaluation; absent terms are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub residual: Option<f64>,
    pub initial: Option<f64>,
    pub value: Option<f64>,
    pub time: Option<f64>,
    pub space: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub terms: LossTerms,
}

/// A loss whose batch the optimizer can redraw.
pub trait StageObjective {
    /// Draws a fresh batch around `params` and returns the sampler's
    /// acceptance rate. With `freeze`, later evaluations at other
    /// parameters reuse the batch deterministically.
    fn refresh(&mut self, params: &[f64], freeze: bool) -> Result<f64>;

    fn evaluate(&mut self, params: &[f64]) -> Result<Evaluation>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub interval: usize,
    pub stage: &'static str,
    pub step: usize,
    pub loss: f64,
    pub terms: LossTerms,
    pub grad_norm: f64,
    pub lr: f64,
    pub acceptance: f64,
    pub wall_time: f64,
}

/// Per-step training history.
#[derive(Clone, Debug)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    start: Instant,
}

impl Default for TrainingLog {
    fn default() -> Self {
        Self {
            rows: Vec::new(),
            start: Instant::now(),
        }
    }
}

pub const LOG_HEADER: &str =
    "interval,stage,step,loss,residual,initial,penalty_value,penalty_time,penalty_space,grad_norm,lr,acceptance,wall_time";

impl TrainingLog {
    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.10e}"));
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:.10e},{},{},{},{},{},{:.6e},{:.6e},{:.4},{:.3}\n",
                r.interval,
                r.stage,
                r.step,
                r.loss,
                opt(r.terms.residual),
                opt(r.terms.initial),
                opt(r.terms.value),
                opt(r.terms.time),
                opt(r.terms.space),
                r.grad_norm,
                r.lr,
                r.acceptance,
                r.wall_time
            ));
        }
        s
    }
}

/// Rescales `g` to norm `threshold` if it is longer.
pub fn clip_gradient(g: ParamGradient, threshold: f64) -> ParamGradient {
    let n = g.norm();
    if n <= threshold {
        return g;
    }
    let s = threshold / n;
    ParamGradient(g.0.into_iter().map(|x| x * s).collect())
}

/// `base_lr * min(k / warmup, 1) * decay_rate^(max(k - warmup, 0) / period)`.
pub fn learning_rate(cfg: &AdamConfig, k: usize) -> f64 {
    let w = cfg.warmup_steps as f64;
    let k = k as f64;
    let ramp = if cfg.warmup_steps == 0 { 1.0 } else { (k / w).min(1.0) };
    cfg.base_lr * ramp * cfg.decay_rate.powf((k - w).max(0.0) / cfg.decay_period)
}

fn non_finite(step: usize, e: &Evaluation) -> Error {
    Error::NonFiniteLoss {
        step,
        detail: format!("loss {} with terms {:?}", e.loss, e.terms),
    }
}

/// Adam over `cfg.steps` steps with a fresh batch every `resample_every`
/// steps and global norm clipping at `clip`.
pub fn adam_stage(
    mut params: Vec<f64>,
    cfg: &AdamConfig,
    clip: f64,
    objective: &mut dyn StageObjective,
    log: &mut TrainingLog,
    interval: usize,
) -> Result<Vec<f64>> {
    let n = params.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut acceptance = f64::NAN;
    for step in 0..cfg.steps {
        if step % cfg.resample_every.max(1) == 0 {
            acceptance = objective.refresh(&params, false)?;
        }
        let e = objective.evaluate(&params)?;
        if !e.loss.is_finite() {
            return Err(non_finite(step, &e));
        }
        let raw = ParamGradient(e.gradient.clone());
        let grad_norm = raw.norm();
        let g = clip_gradient(raw, clip);
        if g.0.iter().any(|x| !x.is_finite()) {
            return Err(non_finite(step, &e));
        }
        let k = step + 1;
        let lr = learning_rate(cfg, k);
        let c1 = 1.0 - cfg.beta1.powi(k as i32);
        let c2 = 1.0 - cfg.beta2.powi(k as i32);
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g.0[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g.0[i] * g.0[i];
            params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
        }
        log.rows.push(LogRow {
            interval,
            stage: "adam",
            step,
            loss: e.loss,
            terms: e.terms,
            grad_norm,
            lr,
            acceptance,
            wall_time: log.elapsed(),
        });
    }
    Ok(params)
}

/// Curvature pairs for the two-loop recursion.
#[derive(Clone, Debug)]
pub struct Lbfgs {
    capacity: usize,
    history: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Lbfgs {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            history: VecDeque::with_capacity(capacity),
        }
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Stores `(s, y)` if it has positive curvature.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) {
            return false;
        }
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back((s, y, 1.0 / sy));
        true
    }

    /// Search direction `-H g`.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alpha = Vec::with_capacity(self.history.len());
        for (s, y, rho) in self.history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alpha.push(a);
        }
        if let Some((s, y, _)) = self.history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|x| *x *= gamma);
        }
        for ((s, y, rho), a) in self.history.iter().zip(alpha.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|x| *x = -*x);
        q
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 20;
const MAX_FAILURES: usize = 3;

/// Outcome of one L-BFGS round on a fixed objective.
#[derive(Clone, Debug)]
pub struct RoundSummary {
    pub steps: usize,
    pub final_eval: Evaluation,
    pub ended_early: bool,
}

/// Up to `steps` L-BFGS iterations with backtracking Armijo line search,
/// starting from an empty curvature history.
pub fn lbfgs_round(
    mut params: Vec<f64>,
    steps: usize,
    opt: &mut Lbfgs,
    objective: &mut dyn StageObjective,
    mut on_step: impl FnMut(usize, &Evaluation),
) -> Result<(Vec<f64>, RoundSummary)> {
    opt.reset();
    let mut cur = objective.evaluate(&params)?;
    if !cur.loss.is_finite() {
        return Err(non_finite(0, &cur));
    }
    let mut failures = 0;
    let mut scale = 1.0;
    let mut taken = 0;
    let mut ended_early = false;
    for step in 0..steps {
        let gnorm = dot(&cur.gradient, &cur.gradient).sqrt();
        if gnorm == 0.0 {
            break;
        }
        let mut d = opt.direction(&cur.gradient);
        let mut slope = dot(&d, &cur.gradient);
        if !(slope < 0.0) {
            opt.reset();
            d = cur.gradient.iter().map(|x| -x).collect();
            slope = -gnorm * gnorm;
        }
        let mut alpha = scale * if opt.history_len() == 0 { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = params.iter().zip(&d).map(|(p, di)| p + alpha * di).collect();
            match objective.evaluate(&trial) {
                Ok(e) if e.loss.is_finite() && e.loss <= cur.loss + ARMIJO * alpha * slope => {
                    accepted = Some((trial, e));
                    break;
                }
                Ok(_) | Err(Error::NodeProximity { .. }) => alpha *= 0.5,
                Err(e) => return Err(e),
            }
        }
        match accepted {
            Some((trial, e)) => {
                let s: Vec<f64> = trial.iter().zip(&params).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = e.gradient.iter().zip(&cur.gradient).map(|(a, b)| a - b).collect();
                opt.push(s, y);
                params = trial;
                cur = e;
                failures = 0;
                scale = 1.0;
                taken += 1;
                on_step(step, &cur);
            }
            None => {
                failures += 1;
                scale *= 0.5;
                if failures >= MAX_FAILURES {
                    ended_early = true;
                    break;
                }
            }
        }
    }
    Ok((
        params,
        RoundSummary {
            steps: taken,
            final_eval: cur,
            ended_early,
        },
    ))
}

/// Outer loop of L-BFGS rounds, each on a freshly drawn frozen batch.
pub fn lbfgs_stage(
    mut params: Vec<f64>,
    cfg: &LbfgsConfig,
    objective: &mut dyn StageObjective,
    log: &mut TrainingLog,
    interval: usize,
) -> Result<(Vec<f64>, Option<RoundSummary>)> {
    let mut opt = Lbfgs::new(cfg.history_size);
    let mut last = None;
    let mut global = 0;
    for _round in 0..cfg.outer_rounds {
        let acceptance = objective.refresh(&params, true)?;
        let (p, summary) = lbfgs_round(params, cfg.steps_per_round, &mut opt, objective, |_, e| {
            log.rows.push(LogRow {
                interval,
                stage: "lbfgs",
                step: global,
                loss: e.loss,
                terms: e.terms,
                grad_norm: dot(&e.gradient, &e.gradient).sqrt(),
                lr: f64::NAN,
                acceptance,
                wall_time: log.elapsed(),
            });
            global += 1;
        })?;
        params = p;
        last = Some(summary);
    }
    Ok((params, last))
}
