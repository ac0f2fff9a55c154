#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tdse_core::ansatz::{init_params, NetworkParams, SystemSpec};
use tdse_core::objective::{HamiltonianKind, Nucleus};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Initial parameters with every entry jittered, so that no tensor sits at a
/// special value.
pub fn random_params(spec: &SystemSpec, seed: u64, scale: f64) -> NetworkParams {
    let mut p = init_params(spec, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let n = Normal::new(0.0, scale).unwrap();
    for x in p.data.iter_mut() {
        *x += n.sample(&mut r);
    }
    p
}

pub fn random_config(r: &mut ChaCha8Rng, n: usize, width: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-width..width)).collect()
}

pub fn trap_1d() -> HamiltonianKind {
    HamiltonianKind::TrappedInteracting1D {
        omega0: 1.0,
        omega_f: 2.0,
        g0: 1.0,
    }
}

pub fn atom_3d() -> HamiltonianKind {
    HamiltonianKind::Coulomb3D {
        nuclei: vec![
            Nucleus {
                position: vec![0.0, 0.0, 0.3],
                charge: 2.0,
            },
            Nucleus {
                position: vec![0.5, -0.2, 0.0],
                charge: 1.0,
            },
        ],
    }
}

/// A spread of small systems covering both dimensions, both spin channels
/// and several determinants.
pub fn small_specs() -> Vec<SystemSpec> {
    vec![
        SystemSpec::new(2, 0, trap_1d()).with_sizes(2, 8, 4, 1),
        SystemSpec::new(2, 1, trap_1d()).with_sizes(2, 6, 3, 2),
        SystemSpec::new(1, 1, HamiltonianKind::h2_laser()).with_sizes(2, 6, 3, 2),
        SystemSpec::new(3, 1, atom_3d()).with_sizes(2, 6, 4, 2),
        SystemSpec::new(2, 2, trap_1d()).with_sizes(3, 5, 5, 3),
    ]
}

/// `psi_sigma(r, t) = exp(-sigma r^2 - i E t)` in one dimension, with the
/// single parameter `sigma`.
pub struct GaussToy {
    pub energy: f64,
}

impl tdse_core::autodiff::WaveProgram for GaussToy {
    fn n_coords(&self) -> usize {
        1
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        vec![(1, 1)]
    }

    fn build(
        &self,
        ctx: &mut tdse_core::autodiff::Ctx,
        params: &[tdse_core::autodiff::Var],
        coords: &tdse_core::autodiff::Jet,
        time: &tdse_core::autodiff::Jet,
    ) -> tdse_core::autodiff::WaveOutput {
        let x2 = ctx.square(coords);
        let s = ctx.matmul(&x2, params[0]);
        let re = ctx.neg(&s);
        let im = ctx.scale(time, -self.energy);
        tdse_core::autodiff::WaveOutput::LogPsi(tdse_core::autodiff::ComplexJet { re, im })
    }
}
