use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::density::TimeDensity;
use crate::error::{invalid, Error, Result};

/// A call of at least this many steps with no accepted move fails.
pub const STALL_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub walkers: usize,
    pub burn_in: usize,
    /// Steps between successive refreshes of a walker set.
    pub thinning: usize,
    pub target_acceptance: f64,
    pub initial_step: f64,
    /// Burn-in steps between step-size adjustments.
    pub adapt_every: usize,
    /// Spread of the Gaussian cloud around the anchors for fresh walkers.
    pub init_width: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            walkers: 256,
            burn_in: 500,
            thinning: 10,
            target_acceptance: 0.5,
            initial_step: 0.5,
            adapt_every: 10,
            init_width: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walkers == 0 || self.thinning == 0 || self.adapt_every == 0 {
            return Err(invalid("sampler walkers, thinning and adapt_every must be positive"));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(invalid("target acceptance must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0 && self.init_width > 0.0) {
            return Err(invalid("initial step and init width must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkerState {
    pub position: Vec<f64>,
    /// Cached `2 log|psi(position)|`.
    pub log_density: f64,
    /// Steps since the last accepted move.
    pub age: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainDiagnostics {
    pub acceptance_rate: f64,
    pub step_size: f64,
    pub n_rejected_node_flags: usize,
    pub accepted: usize,
    pub proposed: usize,
}

impl ChainDiagnostics {
    fn new(step_size: f64) -> Self {
        Self {
            acceptance_rate: 0.0,
            step_size,
            n_rejected_node_flags: 0,
            accepted: 0,
            proposed: 0,
        }
    }

    fn absorb(&mut self, other: &ChainDiagnostics) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
        self.n_rejected_node_flags += other.n_rejected_node_flags;
        self.step_size = other.step_size;
        self.acceptance_rate = if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        };
    }
}

/// SplitMix64 combination of a seed with two stream labels.
pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn walker_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index as u64);
    r
}

/// Random-walk Metropolis with simultaneous Gaussian moves of all
/// coordinates. Walker `w` draws from its own stream `(seed, w)`.
pub fn mh_chain(
    log_density: &dyn Fn(&Array2<f64>) -> Vec<Option<f64>>,
    init: Vec<WalkerState>,
    n_steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<(Vec<WalkerState>, ChainDiagnostics)> {
    if !(step_size > 0.0) {
        return Err(invalid(format!("step size must be positive, got {step_size}")));
    }
    if let Some(w) = init.iter().find(|w| !w.log_density.is_finite()) {
        return Err(invalid(format!(
            "initial walker at {:?} has non-finite log density",
            w.position
        )));
    }
    let mut walkers = init;
    let mut diag = ChainDiagnostics::new(step_size);
    let b = walkers.len();
    if b == 0 || n_steps == 0 {
        return Ok((walkers, diag));
    }
    let n = walkers[0].position.len();
    let mut rngs: Vec<ChaCha8Rng> = (0..b).map(|w| walker_rng(seed, w)).collect();
    let mut proposal = Array2::zeros((b, n));
    let mut uniforms = vec![0.0; b];
    for _ in 0..n_steps {
        for (w, rng) in rngs.iter_mut().enumerate() {
            for c in 0..n {
                let z: f64 = StandardNormal.sample(rng);
                proposal[[w, c]] = walkers[w].position[c] + step_size * z;
            }
            uniforms[w] = rng.gen::<f64>();
        }
        let ld = log_density(&proposal);
        for w in 0..b {
            diag.proposed += 1;
            let Some(new) = ld[w] else {
                diag.n_rejected_node_flags += 1;
                walkers[w].age += 1;
                continue;
            };
            if uniforms[w].ln() < new - walkers[w].log_density {
                walkers[w].position = proposal.row(w).to_vec();
                walkers[w].log_density = new;
                walkers[w].age = 0;
                diag.accepted += 1;
            } else {
                walkers[w].age += 1;
            }
        }
    }
    diag.acceptance_rate = diag.accepted as f64 / diag.proposed as f64;
    if n_steps >= STALL_WINDOW && diag.accepted == 0 {
        return Err(Error::SamplerStalled { window: n_steps });
    }
    Ok((walkers, diag))
}

/// Burn-in with multiplicative step adaptation toward `target`: after each
/// window of `adapt_every` steps the step grows by 1.1 if the window's
/// acceptance exceeded the target and shrinks by 0.9 otherwise.
pub fn burn_in(
    log_density: &dyn Fn(&Array2<f64>) -> Vec<Option<f64>>,
    mut walkers: Vec<WalkerState>,
    steps: usize,
    mut step: f64,
    target: f64,
    adapt_every: usize,
    seed: u64,
) -> Result<(Vec<WalkerState>, f64, ChainDiagnostics)> {
    let mut total = ChainDiagnostics::new(step);
    let mut done = 0;
    let mut window = 0u64;
    while done < steps {
        let k = adapt_every.min(steps - done);
        let (w, d) = mh_chain(log_density, walkers, k, step, mix_seed(seed, 1, window))?;
        walkers = w;
        total.absorb(&d);
        step *= if d.acceptance_rate > target { 1.1 } else { 0.9 };
        done += k;
        window += 1;
    }
    total.step_size = step;
    if steps >= STALL_WINDOW && total.accepted == 0 {
        return Err(Error::SamplerStalled { window: steps });
    }
    Ok((walkers, step, total))
}

/// Gaussian clouds around the anchors; electron `i` starts at anchor
/// `i mod n_anchors`.
pub fn initial_positions(
    n_walkers: usize,
    n_coords: usize,
    anchors: &[Vec<f64>],
    width: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let d = anchors[0].len();
    let n_e = n_coords / d;
    (0..n_walkers)
        .map(|_| {
            let mut r = Vec::with_capacity(n_coords);
            for i in 0..n_e {
                let a = &anchors[i % anchors.len()];
                for x in a.iter() {
                    let z: f64 = StandardNormal.sample(rng);
                    r.push(x + width * z);
                }
            }
            r
        })
        .collect()
}

/// Walkers at the given positions; points where the density is rejected
/// are redrawn around the anchors.
pub(crate) fn seat_walkers(
    density: &dyn TimeDensity,
    t: f64,
    positions: Vec<Vec<f64>>,
    anchors: &[Vec<f64>],
    width: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<WalkerState>> {
    let n = density.n_coords();
    let mut pos = positions;
    for _attempt in 0..100 {
        let m = Array2::from_shape_fn((pos.len(), n), |(w, c)| pos[w][c]);
        let ld = density.log_density(&m, t);
        if ld.iter().all(Option::is_some) {
            return Ok(pos
                .into_iter()
                .zip(ld)
                .map(|(position, l)| WalkerState {
                    position,
                    log_density: l.unwrap(),
                    age: 0,
                })
                .collect());
        }
        for (w, l) in ld.iter().enumerate() {
            if l.is_none() {
                pos[w] = initial_positions(1, n, anchors, width, rng).remove(0);
            }
        }
    }
    Err(Error::SamplerStalled { window: 0 })
}

/// `n_samples` configurations from `density(., t)`. Walkers burn in with
/// step adaptation, then the walker set is harvested every `thinning`
/// steps until enough samples are collected.
pub fn sample_conditional(
    density: &dyn TimeDensity,
    anchors: &[Vec<f64>],
    t: f64,
    n_samples: usize,
    burn_in_steps: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<(Array2<f64>, ChainDiagnostics)> {
    cfg.validate()?;
    let n = density.n_coords();
    if n_samples == 0 {
        return Ok((Array2::zeros((0, n)), ChainDiagnostics::new(cfg.initial_step)));
    }
    let walkers = cfg.walkers.min(n_samples);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, 0));
    let pos = initial_positions(walkers, n, anchors, cfg.init_width, &mut rng);
    let state = seat_walkers(density, t, pos, anchors, cfg.init_width, &mut rng)?;
    let f = |m: &Array2<f64>| density.log_density(m, t);
    let (mut state, step, mut diag) = burn_in(
        &f,
        state,
        burn_in_steps,
        cfg.initial_step,
        cfg.target_acceptance,
        cfg.adapt_every,
        seed,
    )?;
    let mut out = Array2::zeros((n_samples, n));
    let mut filled = 0;
    let mut round = 0u64;
    let mut measure = ChainDiagnostics::new(step);
    while filled < n_samples {
        let (s, d) = mh_chain(&f, state, cfg.thinning, step, mix_seed(seed, 2, round))?;
        state = s;
        measure.absorb(&d);
        for w in &state {
            if filled == n_samples {
                break;
            }
            out.row_mut(filled).assign(&ndarray::ArrayView1::from(&w.position));
            filled += 1;
        }
        round += 1;
    }
    diag.absorb(&measure);
    diag.step_size = step;
    Ok((out, diag))
}

/// Samples of the initial density `|psi_0|^2`.
pub fn sample_initial(
    density: &dyn TimeDensity,
    anchors: &[Vec<f64>],
    n_samples: usize,
    burn_in_steps: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<(Array2<f64>, ChainDiagnostics)> {
    sample_conditional(density, anchors, 0.0, n_samples, burn_in_steps, seed, cfg)
}
