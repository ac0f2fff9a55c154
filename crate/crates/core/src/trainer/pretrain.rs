use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::optim::{adam_stage, lbfgs_stage, Evaluation, LossTerms, StageObjective, TrainingLog};
use super::plan::{Interval, IntervalPlan};
use crate::autodiff::{psi_values, WaveProgram};
use crate::error::Result;
use crate::objective::{
    continuity_penalties, total_loss, BoundaryBatch, GradientMode, HamiltonianKind, InitialBatch, LossWeights,
    Penalties, SampleBatch, TimeSlice, WINSOR_MADS,
};
use crate::oracles::AnalyticState;
use crate::sampler::{mix_seed, sample_conditional, NetworkDensity, OracleDensity, SamplerConfig, SliceSampler};

/// Network, Hamiltonian and walker anchors shared by every interval.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub program: &'a dyn WaveProgram,
    pub hamiltonian: &'a HamiltonianKind,
    pub anchors: &'a [Vec<f64>],
}

/// Loss of one interval with persistent slice walkers.
pub struct NetworkObjective<'a> {
    problem: Problem<'a>,
    weights: LossWeights,
    range: (f64, f64),
    n_slices: usize,
    sampler: SliceSampler,
    initial: Option<(&'a AnalyticState, SliceSampler)>,
    boundary: Option<&'a BoundaryBatch>,
    batch: Option<SampleBatch>,
    winsor_mads: Option<f64>,
    seed: u64,
    round: u64,
}

impl<'a> NetworkObjective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        problem: Problem<'a>,
        weights: LossWeights,
        range: (f64, f64),
        n_slices: usize,
        sampler: SamplerConfig,
        initial: Option<(&'a AnalyticState, usize)>,
        boundary: Option<&'a BoundaryBatch>,
        seed: u64,
    ) -> Result<Self> {
        let main = SliceSampler::new(sampler.clone(), problem.anchors.to_vec(), mix_seed(seed, 1, 0))?;
        let initial = match initial {
            Some((state, n)) => {
                let cfg = SamplerConfig {
                    walkers: n,
                    ..sampler
                };
                Some((state, SliceSampler::new(cfg, problem.anchors.to_vec(), mix_seed(seed, 2, 0))?))
            }
            None => None,
        };
        Ok(Self {
            problem,
            weights,
            range,
            n_slices,
            sampler: main,
            initial,
            boundary,
            batch: None,
            winsor_mads: Some(WINSOR_MADS),
            seed,
            round: 0,
        })
    }

    pub fn set_winsorization(&mut self, mads: Option<f64>) {
        self.winsor_mads = mads;
    }

    pub fn batch(&self) -> Option<&SampleBatch> {
        self.batch.as_ref()
    }

    /// One time per equal stratum of the range, jittered within it.
    fn slice_times(&mut self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 3, self.round));
        let (a, b) = self.range;
        let w = (b - a) / self.n_slices as f64;
        (0..self.n_slices).map(|k| a + (k as f64 + rng.gen::<f64>()) * w).collect()
    }
}

impl StageObjective for NetworkObjective<'_> {
    fn refresh(&mut self, params: &[f64], freeze: bool) -> Result<f64> {
        let times = self.slice_times();
        self.round += 1;
        let density = NetworkDensity {
            program: self.problem.program,
            params,
            hamiltonian: Some(self.problem.hamiltonian),
        };
        let draws = self.sampler.sample(&density, &times)?;
        let acceptance = draws.iter().map(|d| d.diagnostics.acceptance_rate).sum::<f64>() / draws.len() as f64;
        let slices = draws.into_iter().map(|d| TimeSlice::new(d.t, d.positions)).collect();
        let initial = match &mut self.initial {
            Some((state, s)) => {
                let draw = s.sample(&OracleDensity { state }, &[0.0])?.remove(0);
                Some(InitialBatch::from_state(draw.positions, state))
            }
            None => None,
        };
        let mut batch = SampleBatch::new(slices, initial);
        batch.winsor_mads = self.winsor_mads;
        if freeze {
            batch.freeze(self.problem.program, params)?;
        }
        self.batch = Some(batch);
        Ok(acceptance)
    }

    fn evaluate(&mut self, params: &[f64]) -> Result<Evaluation> {
        let batch = self.batch.as_ref().expect("refresh before evaluate");
        let rep = total_loss(
            self.problem.program,
            params,
            self.problem.hamiltonian,
            &self.weights,
            batch,
            self.boundary,
            GradientMode::Surrogate,
        )?;
        Ok(Evaluation {
            loss: rep.total,
            gradient: rep.gradient.expect("gradient requested").0,
            terms: LossTerms {
                residual: Some(rep.residual),
                initial: rep.initial,
                value: rep.penalties.map(|p| p.value),
                time: rep.penalties.map(|p| p.time),
                space: rep.penalties.map(|p| p.space),
            },
        })
    }
}

/// Parameters trained for one interval of the plan.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedInterval {
    pub index: usize,
    pub interval: Interval,
    pub params: Vec<f64>,
    pub final_residual: f64,
    /// Continuity penalties against the previous interval at its start.
    pub penalties: Option<Penalties>,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub intervals: Vec<TrainedInterval>,
    /// Set when an interval missed the convergence gate; that interval is
    /// not in `intervals`.
    pub failure: Option<String>,
}

/// Trains the plan's intervals in order. Interval 0 fits the residual and
/// the initial state; each later interval starts from its predecessor's
/// parameters and fits the residual plus continuity penalties on a boundary
/// batch drawn once from the predecessor at the shared time. Intervals in
/// `completed` are kept and training resumes after them.
pub fn pretrain_sequence(
    problem: Problem<'_>,
    plan: &IntervalPlan,
    psi0: &AnalyticState,
    cfg: &TrainConfig,
    init: Vec<f64>,
    completed: Vec<TrainedInterval>,
    log: &mut TrainingLog,
    mut on_interval: impl FnMut(&TrainedInterval) -> Result<()>,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mut done = completed;
    for i in done.len()..plan.intervals.len() {
        let iv = plan.intervals[i];
        let seed = mix_seed(cfg.seed, 100 + i as u64, 0);
        let start = done.last().map_or_else(|| init.clone(), |p| p.params.clone());
        let boundary = match done.last() {
            None => None,
            Some(prev) => {
                let density = NetworkDensity {
                    program: problem.program,
                    params: &prev.params,
                    hamiltonian: Some(problem.hamiltonian),
                };
                let (coords, _) = sample_conditional(
                    &density,
                    problem.anchors,
                    iv.start,
                    cfg.boundary_points,
                    cfg.sampler.burn_in,
                    mix_seed(seed, 9, 0),
                    &cfg.sampler,
                )?;
                Some(BoundaryBatch::from_network(problem.program, &prev.params, coords, iv.start)?)
            }
        };
        let weights = if iv.first { cfg.weights_first } else { cfg.weights_continuation };
        let initial = iv.first.then_some((psi0, cfg.initial_points));
        let sampler = SamplerConfig {
            walkers: cfg.adam.walkers_per_slice,
            ..cfg.sampler.clone()
        };
        let mut obj = NetworkObjective::new(
            problem,
            weights,
            (iv.start, iv.end),
            cfg.adam.n_slices,
            sampler.clone(),
            initial,
            boundary.as_ref(),
            mix_seed(seed, 1, 0),
        )?;
        obj.set_winsorization(cfg.winsor_mads);
        let mut params = adam_stage(start, &cfg.adam, cfg.clip_threshold, &mut obj, log, i)?;

        let stage2 = SamplerConfig {
            walkers: cfg.adam.walkers_per_slice * cfg.lbfgs.batch_factor,
            ..cfg.sampler.clone()
        };
        let initial = iv.first.then_some((psi0, cfg.initial_points * cfg.lbfgs.batch_factor));
        let mut obj2 = NetworkObjective::new(
            problem,
            weights,
            (iv.start, iv.end),
            cfg.adam.n_slices,
            stage2,
            initial,
            boundary.as_ref(),
            mix_seed(seed, 2, 0),
        )?;
        obj2.set_winsorization(cfg.winsor_mads);
        let summary;
        (params, summary) = lbfgs_stage(params, &cfg.lbfgs, &mut obj2, log, i)?;
        let final_residual = match summary {
            Some(s) => s.final_eval.terms.residual.unwrap_or(f64::NAN),
            None => {
                obj2.refresh(&params, false)?;
                obj2.evaluate(&params)?.terms.residual.unwrap_or(f64::NAN)
            }
        };
        let penalties = match &boundary {
            Some(b) => Some(continuity_penalties(problem.program, &params, b)?),
            None => None,
        };
        let trained = TrainedInterval {
            index: i,
            interval: iv,
            params,
            final_residual,
            penalties,
        };
        if !(final_residual <= cfg.convergence_gate) {
            return Ok(PretrainOutcome {
                intervals: done,
                failure: Some(format!(
                    "interval {i} [{:.4}, {:.4}] ended with residual loss {final_residual:.3e} above the gate {:.1e}",
                    iv.start, iv.end, cfg.convergence_gate
                )),
            });
        }
        on_interval(&trained)?;
        done.push(trained);
    }
    Ok(PretrainOutcome {
        intervals: done,
        failure: None,
    })
}

/// The time-marched solution: each time is answered by the interval whose
/// core range contains it.
#[derive(Clone)]
pub struct PiecewiseSolution<'a> {
    pub program: &'a dyn WaveProgram,
    pub plan: IntervalPlan,
    pub params: Vec<Vec<f64>>,
}

impl PiecewiseSolution<'_> {
    pub fn psi(&self, coords: &Array2<f64>, times: &[f64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); times.len()];
        for (k, p) in self.params.iter().enumerate() {
            let rows: Vec<usize> = (0..times.len()).filter(|&b| self.plan.interval_for(times[b]) == k).collect();
            if rows.is_empty() {
                continue;
            }
            let sub = coords.select(ndarray::Axis(0), &rows);
            let ts: Vec<f64> = rows.iter().map(|&b| times[b]).collect();
            for (&b, v) in rows.iter().zip(psi_values(self.program, p, &sub, &ts)?) {
                out[b] = v;
            }
        }
        Ok(out)
    }
}
