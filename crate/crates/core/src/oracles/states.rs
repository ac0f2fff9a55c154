use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::scaling::ScalingFunctions;
use crate::autodiff::{ComplexJet, Ctx, Jet, Var, WaveOutput, WaveProgram};
use crate::error::{invalid, Result};
use crate::numerics::{assoc_laguerre, gauss_legendre, hermite, vandermonde, OrbitalLabel};
use crate::objective::HamiltonianKind;

/// One term `c |n>` of an oscillator superposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoCoeff {
    pub n: usize,
    pub c: f64,
}

/// One term `c |n l label>` of a hydrogen superposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydrogenCoeff {
    pub n: usize,
    pub l: usize,
    pub label: OrbitalLabel,
    pub c: f64,
}

/// Closed-form reference wavefunctions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalyticState {
    /// `sum_n c_n psi_n(r) exp(-i (n + 1/2) t)` for `m = omega = 1`.
    Ho { coeffs: Vec<HoCoeff> },
    /// Spin-polarized fermions after a trap quench; for `t < 0` the
    /// stationary pre-quench ground state.
    FermionScaling {
        n_particles: usize,
        omega0: f64,
        omega_f: f64,
        g0: f64,
    },
    /// `sum c psi_{n l label}(r) exp(-i E_n t)`, `E_n = -1/(2 n^2)`.
    Hydrogen { coeffs: Vec<HydrogenCoeff> },
}

impl AnalyticState {
    pub fn ho(levels: &[usize]) -> Self {
        let c = 1.0 / (levels.len() as f64).sqrt();
        Self::Ho {
            coeffs: levels.iter().map(|&n| HoCoeff { n, c }).collect(),
        }
    }

    pub fn fermions(n_particles: usize) -> Self {
        Self::FermionScaling {
            n_particles,
            omega0: 1.0,
            omega_f: 2.0,
            g0: 1.0,
        }
    }

    pub fn hydrogen(terms: &[(usize, OrbitalLabel, f64)]) -> Self {
        Self::Hydrogen {
            coeffs: terms
                .iter()
                .map(|&(n, label, c)| HydrogenCoeff {
                    n,
                    l: label.l(),
                    label,
                    c,
                })
                .collect(),
        }
    }

    /// Looks up one of the benchmark states by short name, e.g. `ho01`,
    /// `fermions2`, `h_1s`, `h_1s2p_z`.
    pub fn named(name: &str) -> Result<Self> {
        use OrbitalLabel::*;
        let s3 = 1.0 / 3f64.sqrt();
        let s2 = 1.0 / 2f64.sqrt();
        Ok(match name {
            "ho0" => Self::ho(&[0]),
            "ho1" => Self::ho(&[1]),
            "ho2" => Self::ho(&[2]),
            "ho01" => Self::ho(&[0, 1]),
            "ho012" => Self::ho(&[0, 1, 2]),
            "fermions2" => Self::fermions(2),
            "fermions3" => Self::fermions(3),
            "h_1s" => Self::hydrogen(&[(1, S, 1.0)]),
            "h_2s" => Self::hydrogen(&[(2, S, 1.0)]),
            "h_2p_z" => Self::hydrogen(&[(2, Pz, 1.0)]),
            "h_3s" => Self::hydrogen(&[(3, S, 1.0)]),
            "h_1s2p_z" => Self::hydrogen(&[(1, S, s2), (2, Pz, s2)]),
            "h_2p_x2p_z" => Self::hydrogen(&[(2, Pz, s3), (2, Px, 2f64.sqrt() * s3)]),
            "h_1s2s3s" => Self::hydrogen(&[(1, S, s3), (2, S, s3), (3, S, s3)]),
            "h_2s2p_z3d_z2" => Self::hydrogen(&[(2, S, s3), (2, Pz, s3), (3, Dz2, s3)]),
            other => return Err(invalid(format!("unknown oracle {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Ho { coeffs } => {
                if coeffs.is_empty() {
                    return Err(invalid("oscillator state needs at least one level"));
                }
                if let Some(c) = coeffs.iter().find(|c| c.n > 20) {
                    return Err(invalid(format!("oscillator level {} exceeds 20", c.n)));
                }
            }
            Self::FermionScaling {
                n_particles,
                omega0,
                omega_f,
                g0,
            } => {
                if *n_particles == 0 {
                    return Err(invalid("fermion oracle needs at least one particle"));
                }
                if !(*omega0 > 0.0 && *omega_f > 0.0) {
                    return Err(invalid("trap frequencies must be positive"));
                }
                if *g0 != 1.0 {
                    return Err(invalid(format!(
                        "fermion oracle is defined for g0 = 1 only, got {g0}"
                    )));
                }
            }
            Self::Hydrogen { coeffs } => {
                if coeffs.is_empty() {
                    return Err(invalid("hydrogen state needs at least one orbital"));
                }
                for c in coeffs {
                    if c.n == 0 || c.n > 3 || c.l >= c.n || c.label.l() != c.l {
                        return Err(invalid(format!(
                            "unsupported hydrogen orbital n={} l={} label={:?}",
                            c.n, c.l, c.label
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_particles(&self) -> usize {
        match self {
            Self::FermionScaling { n_particles, .. } => *n_particles,
            _ => 1,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Hydrogen { .. } => 3,
            _ => 1,
        }
    }

    pub fn n_coords(&self) -> usize {
        self.n_particles() * self.dimension()
    }

    /// Hamiltonian whose TDSE this state solves.
    pub fn hamiltonian(&self) -> HamiltonianKind {
        match self {
            Self::Ho { .. } => HamiltonianKind::harmonic_oscillator(),
            Self::FermionScaling {
                omega0, omega_f, g0, ..
            } => HamiltonianKind::TrappedInteracting1D {
                omega0: *omega0,
                omega_f: *omega_f,
                g0: *g0,
            },
            Self::Hydrogen { .. } => HamiltonianKind::hydrogen(),
        }
    }

    /// `Psi(r, t)` with `r` flattened `N x d`.
    pub fn eval(&self, r: &[f64], t: f64) -> Complex64 {
        match self {
            Self::Ho { coeffs } => {
                let x = r[0];
                let g = (-0.5 * x * x).exp();
                coeffs
                    .iter()
                    .map(|c| {
                        let amp = c.c * ho_norm(c.n) * hermite(c.n, x) * g;
                        Complex64::from_polar(amp, -(c.n as f64 + 0.5) * t)
                    })
                    .sum()
            }
            Self::FermionScaling {
                n_particles,
                omega0,
                omega_f,
                g0,
            } => {
                let n = *n_particles;
                let tf = FermionTime::at(t, *omega0, *omega_f, *g0, n);
                let omega = fermion_omega(n, *g0);
                let e0 = fermion_e0(n, *g0);
                let y: Vec<f64> = r.iter().map(|x| x / tf.l).collect();
                let sy2: f64 = y.iter().map(|v| v * v).sum();
                let sy: f64 = y.iter().sum();
                let r2: f64 = r.iter().map(|v| v * v).sum();
                let amp = vandermonde(&y) / tf.r
                    * (-0.5 * omega * sy2 - (1.0 - omega) / (2.0 * n as f64) * sy * sy).exp();
                Complex64::from_polar(amp, tf.f * r2 - e0 * tf.tau)
            }
            Self::Hydrogen { coeffs } => {
                let v = [r[0], r[1], r[2]];
                let rad = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                coeffs
                    .iter()
                    .map(|c| {
                        let nf = c.n as f64;
                        let rho = 2.0 * rad / nf;
                        let ang: f64 = c
                            .label
                            .polynomial()
                            .iter()
                            .map(|(k, e)| k * monomial(&v, e))
                            .sum();
                        let amp = c.c
                            * hydrogen_norm(c.n, c.l)
                            * (2.0 / nf).powi(c.l as i32)
                            * assoc_laguerre(c.n - c.l - 1, 2 * c.l + 1, rho)
                            * (-rad / nf).exp()
                            * ang;
                        Complex64::from_polar(amp, -hydrogen_energy(c.n) * t)
                    })
                    .sum()
            }
        }
    }

    /// The state as a parameter-free program, for derivative bundles.
    pub fn program(&self) -> OracleProgram {
        OracleProgram {
            state: self.clone(),
        }
    }
}

fn monomial(v: &[f64; 3], e: &[u32; 3]) -> f64 {
    v[0].powi(e[0] as i32) * v[1].powi(e[1] as i32) * v[2].powi(e[2] as i32)
}

/// `(2^n n!)^{-1/2} pi^{-1/4}`.
pub fn ho_norm(n: usize) -> f64 {
    let mut fact = 1.0;
    for k in 1..=n {
        fact *= k as f64;
    }
    1.0 / ((2f64.powi(n as i32) * fact).sqrt() * PI.powf(0.25))
}

/// Exact eigenstate value `psi_n(r) exp(-i E_n t)`, `E_n = n + 1/2`.
pub fn ho_state(coeffs: &[HoCoeff], r: f64, t: f64) -> Complex64 {
    AnalyticState::Ho {
        coeffs: coeffs.to_vec(),
    }
    .eval(&[r], t)
}

pub fn hydrogen_energy(n: usize) -> f64 {
    -0.5 / (n * n) as f64
}

/// Radial normalization `sqrt((2/n)^3 (n-l-1)! / (2n (n+l)!))`.
pub fn hydrogen_norm(n: usize, l: usize) -> f64 {
    let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
    let nf = n as f64;
    ((2.0 / nf).powi(3) * fact(n - l - 1) / (2.0 * nf * fact(n + l))).sqrt()
}

pub fn hydrogen_state(coeffs: &[HydrogenCoeff], v: [f64; 3], t: f64) -> Result<Complex64> {
    let s = AnalyticState::Hydrogen {
        coeffs: coeffs.to_vec(),
    };
    s.validate()?;
    Ok(s.eval(&v, t))
}

/// Relative-mode frequency of the pre-quench ground state.
pub fn fermion_omega(n: usize, g0: f64) -> f64 {
    (1.0 + n as f64 * g0 * g0).sqrt()
}

/// Pre-quench ground-state energy `(1 + (N^2 - 1) omega) / 2`.
pub fn fermion_e0(n: usize, g0: f64) -> f64 {
    let nf = n as f64;
    0.5 * (1.0 + (nf * nf - 1.0) * fermion_omega(n, g0))
}

pub fn fermion_psi(r: &[f64], t: f64, omega0: f64, omega_f: f64, g0: f64) -> Complex64 {
    AnalyticState::FermionScaling {
        n_particles: r.len(),
        omega0,
        omega_f,
        g0,
    }
    .eval(r, t)
}

/// Time-dependent coefficients of the fermion solution together with their
/// rates; before the quench the state is stationary.
#[derive(Clone, Copy, Debug)]
struct FermionTime {
    l: f64,
    l_dot: f64,
    f: f64,
    f_dot: f64,
    tau: f64,
    tau_dot: f64,
    r: f64,
}

impl FermionTime {
    fn at(t: f64, omega0: f64, omega_f: f64, g0: f64, n: usize) -> Self {
        if t < 0.0 {
            return Self {
                l: 1.0,
                l_dot: 0.0,
                f: 0.0,
                f_dot: 0.0,
                tau: t,
                tau_dot: 1.0,
                r: 1.0,
            };
        }
        let s = ScalingFunctions::at(t, omega0, omega_f, g0, n);
        Self {
            l: s.l,
            l_dot: s.l_dot,
            f: s.f,
            f_dot: s.f_dot(),
            tau: s.tau,
            tau_dot: s.tau_dot(),
            r: s.r,
        }
    }
}

/// Monopole `sum_i <r_i^2>` of the fermion solution at `t`, from
/// `L(t)^2 M(0)` with `M(0)` by tensor Gauss-Legendre quadrature on
/// `[-8, 8]^N`.
pub fn monopole_ref(t: f64, n: usize, omega0: f64, omega_f: f64, g0: f64) -> Result<f64> {
    if n == 0 || n > 3 {
        return Err(invalid(format!("monopole_ref supports 1 <= N <= 3, got {n}")));
    }
    let m0 = initial_monopole(n, g0)?;
    let l = if t < 0.0 {
        1.0
    } else {
        ScalingFunctions::at(t, omega0, omega_f, g0, n).l
    };
    Ok(l * l * m0)
}

fn initial_monopole(n: usize, g0: f64) -> Result<f64> {
    let order = match n {
        1 | 2 => 64,
        _ => 40,
    };
    let rule = gauss_legendre(order, -8.0, 8.0)?;
    let state = AnalyticState::FermionScaling {
        n_particles: n,
        omega0: 1.0,
        omega_f: 1.0,
        g0,
    };
    let mut idx = vec![0usize; n];
    let mut r = vec![0.0; n];
    let (mut num, mut den) = (0.0, 0.0);
    loop {
        let mut w = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            r[k] = rule.nodes[i];
            w *= rule.weights[i];
        }
        let p = state.eval(&r, 0.0).norm_sqr() * w;
        num += p * r.iter().map(|x| x * x).sum::<f64>();
        den += p;
        let mut k = 0;
        loop {
            if k == n {
                return Ok(num / den);
            }
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Parameter-free [`WaveProgram`] for an [`AnalyticState`].
#[derive(Clone, Debug)]
pub struct OracleProgram {
    state: AnalyticState,
}

impl OracleProgram {
    pub fn state(&self) -> &AnalyticState {
        &self.state
    }
}

/// Jet of a function of time alone, from its values and rates.
fn time_function(ctx: &mut Ctx, values: Vec<f64>, rates: Vec<f64>) -> Jet {
    let b = values.len();
    let v = ctx
        .graph
        .constant(Array2::from_shape_vec((b, 1), values).unwrap());
    let mut j = ctx.lift(v);
    if ctx.mode.time {
        j.dt = Some(
            ctx.graph
                .constant(Array2::from_shape_vec((b, 1), rates).unwrap()),
        );
    }
    j
}

fn column(ctx: &mut Ctx, a: &Jet, c: usize) -> Jet {
    ctx.gather_cols(a, &Arc::new(vec![c]))
}

/// Polynomial `sum_k a_k x^k` by Horner's rule.
fn poly(ctx: &mut Ctx, x: &Jet, coeffs: &[f64]) -> Jet {
    let (b, _) = ctx.shape(x);
    let mut acc = ctx.filled(b, 1, *coeffs.last().unwrap());
    for &a in coeffs.iter().rev().skip(1) {
        let m = ctx.mul(&acc, x);
        acc = ctx.add_scalar(&m, a);
    }
    acc
}

/// Power-basis coefficients of `H_n`.
fn hermite_coeffs(n: usize) -> Vec<f64> {
    let mut h0 = vec![1.0];
    if n == 0 {
        return h0;
    }
    let mut h1 = vec![0.0, 2.0];
    for k in 1..n {
        let mut h2 = vec![0.0; k + 2];
        for (i, &c) in h1.iter().enumerate() {
            h2[i + 1] += 2.0 * c;
        }
        for (i, &c) in h0.iter().enumerate() {
            h2[i] -= 2.0 * k as f64 * c;
        }
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Power-basis coefficients of `L_n^k`.
fn laguerre_coeffs(n: usize, k: usize) -> Vec<f64> {
    let binom = |a: usize, b: usize| -> f64 {
        (0..b).map(|i| (a - i) as f64 / (i + 1) as f64).product()
    };
    let fact = |m: usize| (1..=m).map(|x| x as f64).product::<f64>();
    (0..=n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * binom(n + k, n - i) / fact(i)
        })
        .collect()
}

fn phase_rotation(ctx: &mut Ctx, time: &Jet, energy: f64) -> ComplexJet {
    let ph = ctx.scale(time, -energy);
    ctx.cis(&ph)
}

impl WaveProgram for OracleProgram {
    fn n_coords(&self) -> usize {
        self.state.n_coords()
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        Vec::new()
    }

    fn build(&self, ctx: &mut Ctx, _params: &[Var], coords: &Jet, time: &Jet) -> WaveOutput {
        let (b, _) = ctx.shape(coords);
        let times: Vec<f64> = ctx.graph.value(time.v).iter().copied().collect();
        let zero = ctx.filled(b, 1, 0.0);
        let czero = ctx.complex_real(zero);
        match &self.state {
            AnalyticState::Ho { coeffs } => {
                let x = column(ctx, coords, 0);
                let x2 = ctx.square(&x);
                let e = ctx.scale(&x2, -0.5);
                let gauss = ctx.exp(&e);
                let mut acc = czero;
                for c in coeffs {
                    let hc: Vec<f64> = hermite_coeffs(c.n)
                        .iter()
                        .map(|h| h * c.c * ho_norm(c.n))
                        .collect();
                    let p = poly(ctx, &x, &hc);
                    let amp = ctx.mul(&p, &gauss);
                    let rot = phase_rotation(ctx, time, c.n as f64 + 0.5);
                    let term = ctx.cscale(&amp, &rot);
                    acc = ctx.cadd(&acc, &term);
                }
                WaveOutput::Psi(acc)
            }
            AnalyticState::FermionScaling {
                n_particles,
                omega0,
                omega_f,
                g0,
            } => {
                let n = *n_particles;
                let tf: Vec<FermionTime> = times
                    .iter()
                    .map(|&t| FermionTime::at(t, *omega0, *omega_f, *g0, n))
                    .collect();
                let omega = fermion_omega(n, *g0);
                let e0 = fermion_e0(n, *g0);
                let inv_l = time_function(
                    ctx,
                    tf.iter().map(|s| 1.0 / s.l).collect(),
                    tf.iter().map(|s| -s.l_dot / (s.l * s.l)).collect(),
                );
                let inv_r = time_function(
                    ctx,
                    tf.iter().map(|s| 1.0 / s.r).collect(),
                    tf.iter()
                        .map(|s| -0.5 * n as f64 * s.l_dot / s.l / s.r)
                        .collect(),
                );
                let f = time_function(
                    ctx,
                    tf.iter().map(|s| s.f).collect(),
                    tf.iter().map(|s| s.f_dot).collect(),
                );
                let tau = time_function(
                    ctx,
                    tf.iter().map(|s| s.tau).collect(),
                    tf.iter().map(|s| s.tau_dot).collect(),
                );
                let y = ctx.mul_col(coords, &inv_l);
                let cols: Vec<Jet> = (0..n).map(|i| column(ctx, &y, i)).collect();
                let mut vdm = ctx.filled(b, 1, 1.0);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let d = ctx.sub(&cols[j], &cols[i]);
                        vdm = ctx.mul(&vdm, &d);
                    }
                }
                let y2 = ctx.square(&y);
                let sy2 = ctx.sum_cols(&y2);
                let sy = ctx.sum_cols(&y);
                let sy_sq = ctx.square(&sy);
                let a = ctx.scale(&sy2, -0.5 * omega);
                let c = ctx.scale(&sy_sq, -(1.0 - omega) / (2.0 * n as f64));
                let ex = ctx.add(&a, &c);
                let gauss = ctx.exp(&ex);
                let amp0 = ctx.mul(&vdm, &gauss);
                let amp = ctx.mul(&amp0, &inv_r);
                let r2 = {
                    let sq = ctx.square(coords);
                    ctx.sum_cols(&sq)
                };
                let fr2 = ctx.mul(&f, &r2);
                let et = ctx.scale(&tau, -e0);
                let phase = ctx.add(&fr2, &et);
                let rot = ctx.cis(&phase);
                WaveOutput::Psi(ctx.cscale(&amp, &rot))
            }
            AnalyticState::Hydrogen { coeffs } => {
                let xyz: Vec<Jet> = (0..3).map(|i| column(ctx, coords, i)).collect();
                let rad = ctx.row_norm(coords);
                let mut acc = czero;
                for c in coeffs {
                    let nf = c.n as f64;
                    let mut ang: Option<Jet> = None;
                    for (k, e) in c.label.polynomial() {
                        let mut m = ctx.filled(b, 1, k);
                        for (axis, &p) in e.iter().enumerate() {
                            for _ in 0..p {
                                m = ctx.mul(&m, &xyz[axis]);
                            }
                        }
                        ang = Some(match ang {
                            Some(a) => ctx.add(&a, &m),
                            None => m,
                        });
                    }
                    let rho = ctx.scale(&rad, 2.0 / nf);
                    let pre = c.c * hydrogen_norm(c.n, c.l) * (2.0 / nf).powi(c.l as i32);
                    let lc: Vec<f64> = laguerre_coeffs(c.n - c.l - 1, 2 * c.l + 1)
                        .iter()
                        .map(|x| x * pre)
                        .collect();
                    let lag = poly(ctx, &rho, &lc);
                    let er = ctx.scale(&rad, -1.0 / nf);
                    let decay = ctx.exp(&er);
                    let radial = ctx.mul(&lag, &decay);
                    let amp = ctx.mul(&radial, &ang.unwrap());
                    let rot = phase_rotation(ctx, time, hydrogen_energy(c.n));
                    let term = ctx.cscale(&amp, &rot);
                    acc = ctx.cadd(&acc, &term);
                }
                WaveOutput::Psi(acc)
            }
        }
    }
}
