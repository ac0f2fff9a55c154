//! Invariant suites run by `tdse selftest`.

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use tdse_core::ansatz::{init_params, FastNet, SystemSpec};
use tdse_core::autodiff::{evaluate_bundle, psi_values, ComplexJet, Ctx, Jet, Var, WaveOutput, WaveProgram};
use tdse_core::numerics::{gauss_legendre, wrap_phase};
use tdse_core::objective::{residual_density, residual_grad, HamiltonianKind, SampleBatch, TimeSlice};
use tdse_core::oracles::{ermakov_residual, AnalyticState};

pub const ORACLES: [&str; 15] = [
    "ho0", "ho1", "ho2", "ho01", "ho012", "fermions2", "fermions3", "h_1s", "h_2s", "h_2p_z", "h_3s", "h_1s2p_z",
    "h_2p_x2p_z", "h_1s2s3s", "h_2s2p_z3d_z2",
];

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// One entry per violated invariant.
    pub failures: Vec<String>,
    pub checks: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

struct Suite {
    failures: Vec<String>,
    checks: usize,
}

impl Suite {
    fn new() -> Self {
        Self {
            failures: Vec::new(),
            checks: 0,
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }
}

fn timed(name: &'static str, f: impl FnOnce(&mut Suite)) -> SuiteResult {
    let start = Instant::now();
    let mut s = Suite::new();
    f(&mut s);
    SuiteResult {
        name,
        passed: s.failures.is_empty(),
        failures: s.failures,
        checks: s.checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn trap() -> HamiltonianKind {
    HamiltonianKind::TrappedInteracting1D {
        omega0: 1.0,
        omega_f: 2.0,
        g0: 1.0,
    }
}

fn perturbed(spec: &SystemSpec, seed: u64, scale: f64) -> Vec<f64> {
    let mut p = init_params(spec, seed).expect("valid spec").data;
    let mut g = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = Normal::new(0.0, scale).unwrap();
    p.iter_mut().for_each(|x| *x += n.sample(&mut g));
    p
}

fn swapped(r: &[f64], i: usize, j: usize) -> Vec<f64> {
    let mut s = r.to_vec();
    s.swap(i, j);
    s
}

/// Exchange antisymmetry of the Vandermonde product `vandermonde`, the
/// network ansatz and the fermion oracle.
pub fn antisymmetry(vandermonde: fn(&[f64]) -> f64) -> SuiteResult {
    timed("antisymmetry", |s| {
        let mut g = ChaCha8Rng::seed_from_u64(1);
        for n in 2..6 {
            for _ in 0..20 {
                let r: Vec<f64> = (0..n).map(|_| g.gen_range(-3.0..3.0)).collect();
                let (i, j) = (g.gen_range(0..n), g.gen_range(0..n));
                if i == j {
                    continue;
                }
                let (a, b) = (vandermonde(&r), vandermonde(&swapped(&r, i, j)));
                s.check((a + b).abs() <= 1e-12 * a.abs().max(1e-300), || {
                    format!("vandermonde: exchanging {i},{j} of {r:?} gives {b}, expected {}", -a)
                });
            }
        }
        for n in [2usize, 3, 4] {
            let spec = SystemSpec::new(n, 0, trap()).with_sizes(2, 8, 4, 2);
            let net = FastNet::new(&spec).expect("valid spec");
            for draw in 0..30u64 {
                let params = perturbed(&spec, 100 * n as u64 + draw, 0.3);
                let r: Vec<f64> = (0..n).map(|_| g.gen_range(-2.0..2.0)).collect();
                let t = g.gen_range(0.0..3.0);
                let i = g.gen_range(0..n);
                let j = (i + g.gen_range(1..n)) % n;
                let coords = Array2::from_shape_vec((2, n), [r.clone(), swapped(&r, i, j)].concat()).unwrap();
                match psi_values(&net, &params, &coords, &[t, t]) {
                    Ok(psi) => {
                        let (a, b) = (psi[0].ln(), psi[1].ln());
                        let dmag = (a.re - b.re).abs();
                        let dphase = (wrap_phase(a.im - b.im).abs() - PI).abs();
                        s.check(dmag <= 1e-12 && dphase <= 1e-10, || {
                            format!("network N={n}: exchange changes log|psi| by {dmag:.1e}, phase off pi by {dphase:.1e}")
                        });
                    }
                    Err(e) => s.check(false, || format!("network N={n}: {e}")),
                }
            }
        }
        for n in [2usize, 3] {
            let st = AnalyticState::fermions(n);
            for _ in 0..20 {
                let r: Vec<f64> = (0..n).map(|_| g.gen_range(-2.0..2.0)).collect();
                let t = g.gen_range(-0.5..2.0);
                let (a, b) = (st.eval(&r, t), st.eval(&swapped(&r, 0, 1), t));
                s.check((a + b).norm() <= 1e-12 * a.norm().max(1e-300), || {
                    format!("fermion oracle N={n}: psi {a} and exchanged {b} do not cancel")
                });
            }
        }
    })
}

/// Derivative bundle against central finite differences.
pub fn derivatives() -> SuiteResult {
    timed("derivatives", |s| {
        let spec = SystemSpec::new(2, 0, trap()).with_sizes(2, 8, 4, 1);
        let net = FastNet::new(&spec).expect("valid spec");
        let params = perturbed(&spec, 7, 0.2);
        let h = 1e-4;
        // well-separated points keep the stencil away from the node
        let points = [([-0.9, 0.6], 0.3), ([0.2, 1.1], 1.0), ([-1.2, -0.1], 1.7), ([0.8, -0.7], 0.6)];
        for (r, t) in points {
            let b = match evaluate_bundle(&net, &params, &r, t) {
                Ok(b) => b,
                Err(e) => return s.check(false, || format!("bundle at {r:?}: {e}")),
            };
            let mut rows = vec![r.to_vec()];
            let mut times = vec![t];
            for k in 0..2 {
                for sg in [1.0, -1.0] {
                    let mut x = r.to_vec();
                    x[k] += sg * h;
                    rows.push(x);
                    times.push(t);
                }
            }
            rows.extend([r.to_vec(), r.to_vec()]);
            times.extend([t + h, t - h]);
            let coords = Array2::from_shape_vec((7, 2), rows.concat()).unwrap();
            let psi = psi_values(&net, &params, &coords, &times).expect("finite network");
            let p0 = psi[0];
            let mut lap = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                let (pp, pm) = (psi[1 + 2 * k], psi[2 + 2 * k]);
                let fd = (pp - pm) / (2.0 * h) / p0;
                let e = (fd - b.grad_r[k]).norm() / b.grad_r[k].norm();
                s.check(e <= 1e-6, || format!("gradient {k} at {r:?}: relative error {e:.1e}"));
                lap += (pp - 2.0 * p0 + pm) / (h * h) / p0;
            }
            let e = (lap - b.lap_over_psi()).norm() / b.lap_over_psi().norm();
            s.check(e <= 1e-6, || format!("laplacian at {r:?}: relative error {e:.1e}"));
            let dt = (psi[5] - psi[6]) / (2.0 * h) / p0;
            let e = (dt - b.dlog_dt).norm() / b.dlog_dt.norm();
            s.check(e <= 1e-6, || format!("time derivative at {r:?}: relative error {e:.1e}"));
        }
    })
}

pub fn ermakov() -> SuiteResult {
    timed("ermakov", |s| {
        for k in 0..1000 {
            let t = PI * k as f64 / 999.0;
            let e = ermakov_residual(t, 1.0, 2.0).abs();
            s.check(e <= 1e-9, || format!("Ermakov residual {e:.1e} at t={t}"));
        }
    })
}

pub fn oracle_residuals() -> SuiteResult {
    timed("oracle_residuals", |s| {
        let mut g = ChaCha8Rng::seed_from_u64(3);
        for name in ORACLES {
            let st = AnalyticState::named(name).expect("benchmark state");
            let h = st.hamiltonian();
            let prog = st.program();
            for _ in 0..20 {
                let r: Vec<f64> = (0..st.n_coords()).map(|_| g.gen_range(-2.5..2.5)).collect();
                let t = g.gen_range(0.0..3.0);
                let rho = evaluate_bundle(&prog, &[], &r, t).and_then(|b| residual_density(&b, &r, t, &h));
                match rho {
                    Ok(v) => s.check(v <= 1e-8, || format!("{name}: residual {v:.1e} at t={t}")),
                    Err(e) => s.check(false, || format!("{name}: {e}")),
                }
            }
        }
    })
}

/// `exp(-sigma x^2 - i E t)` with `sigma` as the only parameter.
struct Gaussian {
    energy: f64,
}

impl WaveProgram for Gaussian {
    fn n_coords(&self) -> usize {
        1
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        vec![(1, 1)]
    }

    fn build(&self, ctx: &mut Ctx, params: &[Var], coords: &Jet, time: &Jet) -> WaveOutput {
        let x2 = ctx.square(coords);
        let s = ctx.matmul(&x2, params[0]);
        let re = ctx.neg(&s);
        let im = ctx.scale(time, -self.energy);
        WaveOutput::LogPsi(ComplexJet { re, im })
    }
}

/// Residual-gradient estimator mean against a quadrature derivative.
pub fn estimator() -> SuiteResult {
    timed("estimator", |s| {
        let (sigma, h) = (0.4, 1e-5);
        let ho = HamiltonianKind::harmonic_oscillator();
        let prog = Gaussian { energy: 0.5 };
        let q = gauss_legendre(200, -8.0, 8.0).expect("valid rule");
        let loss = |sg: f64| {
            let (mut num, mut den) = (0.0, 0.0);
            for (x, w) in q.iter() {
                let b = evaluate_bundle(&prog, &[sg], &[x], 0.3).expect("finite");
                let p = (-2.0 * sg * x * x).exp() * w;
                num += p * residual_density(&b, &[x], 0.3, &ho).expect("finite");
                den += p;
            }
            num / den
        };
        let exact = (loss(sigma + h) - loss(sigma - h)) / (2.0 * h);
        let draws: Vec<f64> = (0..200u64)
            .map(|seed| {
                let mut g = ChaCha8Rng::seed_from_u64(9000 + seed);
                let d = Normal::new(0.0, (0.25 / sigma).sqrt()).unwrap();
                let slices = (0..4)
                    .map(|k| TimeSlice::new((k as f64 + 0.5) / 4.0, Array2::from_shape_fn((256, 1), |_| d.sample(&mut g))))
                    .collect();
                let mut b = SampleBatch::new(slices, None);
                b.winsor_mads = None;
                residual_grad(&prog, &[sigma], &b, &ho).map(|g| g.0[0]).unwrap_or(f64::NAN)
            })
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let se = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        s.check((mean - exact).abs() < 3.0 * se, || {
            format!("estimator mean {mean:.5} vs quadrature {exact:.5} (standard error {se:.1e})")
        });
    })
}

pub fn run_all() -> Summary {
    let suites = vec![
        antisymmetry(tdse_core::numerics::vandermonde),
        derivatives(),
        ermakov(),
        oracle_residuals(),
        estimator(),
    ];
    Summary {
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}
