use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::chain::{burn_in, initial_positions, mh_chain, mix_seed, seat_walkers, ChainDiagnostics, SamplerConfig, WalkerState};
use super::density::TimeDensity;
use crate::error::Result;

/// Walker positions drawn at one time slice.
#[derive(Clone, Debug)]
pub struct SliceDraw {
    pub t: f64,
    pub positions: Array2<f64>,
    pub diagnostics: ChainDiagnostics,
}

/// Persistent walker sets, one per time slice. Walkers survive between
/// calls so that each refresh only needs `thinning` steps.
#[derive(Clone, Debug)]
pub struct SliceSampler {
    cfg: SamplerConfig,
    anchors: Vec<Vec<f64>>,
    seed: u64,
    round: u64,
    walkers: Vec<Vec<WalkerState>>,
    steps: Vec<f64>,
}

impl SliceSampler {
    pub fn new(cfg: SamplerConfig, anchors: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            anchors,
            seed,
            round: 0,
            walkers: Vec::new(),
            steps: Vec::new(),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn n_slices(&self) -> usize {
        self.walkers.len()
    }

    /// Forget all walkers; the next call burns in from scratch.
    pub fn reset(&mut self) {
        self.walkers.clear();
        self.steps.clear();
    }

    /// Draws `walkers` configurations per time in `times`.
    ///
    /// The first call (or any call with a different slice count) burns in
    /// slice by slice, each warm-started from its predecessor. Later calls
    /// rescore the stored walkers under `density` at the new times and
    /// advance every slice by `thinning` steps in parallel.
    pub fn sample(&mut self, density: &dyn TimeDensity, times: &[f64]) -> Result<Vec<SliceDraw>> {
        let round = self.round;
        self.round += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 10, round));
        let width = self.cfg.init_width;
        let n = density.n_coords();

        if self.walkers.len() != times.len() {
            self.reset();
            let mut draws = Vec::with_capacity(times.len());
            let mut prev: Option<Vec<Vec<f64>>> = None;
            for (k, &t) in times.iter().enumerate() {
                let pos = prev
                    .take()
                    .unwrap_or_else(|| initial_positions(self.cfg.walkers, n, &self.anchors, width, &mut rng));
                let state = seat_walkers(density, t, pos, &self.anchors, width, &mut rng)?;
                let (steps, step0) = match self.steps.last() {
                    None => (self.cfg.burn_in, self.cfg.initial_step),
                    Some(&s) => ((self.cfg.burn_in / 4).max(self.cfg.adapt_every), s),
                };
                let f = |m: &Array2<f64>| density.log_density(m, t);
                let (state, step, diag) = burn_in(
                    &f,
                    state,
                    steps,
                    step0,
                    self.cfg.target_acceptance,
                    self.cfg.adapt_every,
                    mix_seed(self.seed, 20 + k as u64, round),
                )?;
                prev = Some(state.iter().map(|w| w.position.clone()).collect());
                draws.push(SliceDraw {
                    t,
                    positions: to_matrix(&state, n),
                    diagnostics: diag,
                });
                self.walkers.push(state);
                self.steps.push(step);
            }
            return Ok(draws);
        }

        // Rescore under the current parameters and times before moving.
        let mut seeded = Vec::with_capacity(times.len());
        for (k, &t) in times.iter().enumerate() {
            let pos: Vec<Vec<f64>> = self.walkers[k].iter().map(|w| w.position.clone()).collect();
            seeded.push(seat_walkers(density, t, pos, &self.anchors, width, &mut rng)?);
        }
        let thinning = self.cfg.thinning;
        let seed = self.seed;
        let steps = self.steps.clone();
        let moved: Vec<Result<(Vec<WalkerState>, ChainDiagnostics)>> = seeded
            .into_par_iter()
            .enumerate()
            .map(|(k, state)| {
                let t = times[k];
                let f = |m: &Array2<f64>| density.log_density(m, t);
                mh_chain(&f, state, thinning, steps[k], mix_seed(seed, 1000 + k as u64, round))
            })
            .collect();
        let mut draws = Vec::with_capacity(times.len());
        for (k, r) in moved.into_iter().enumerate() {
            let (state, diag) = r?;
            draws.push(SliceDraw {
                t: times[k],
                positions: to_matrix(&state, n),
                diagnostics: diag,
            });
            self.walkers[k] = state;
        }
        Ok(draws)
    }
}

fn to_matrix(state: &[WalkerState], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((state.len(), n), |(w, c)| state[w].position[c])
}
