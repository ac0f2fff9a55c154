//! Straight-line evaluation of the ansatz at a single configuration.
//!
//! Dense `f64` arithmetic with LU determinants in log domain and a
//! log-sum-exp over determinants. It shares no code with the batched tape
//! program and serves as its cross-check.

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use super::params::{envelope_counts, pi_column, sigma_column, NetworkParams};
use super::spec::SystemSpec;
use crate::error::{invalid, Error, Result};
use crate::numerics::{complex_log_sum_exp, complex_slogdet};

/// One- and two-electron features at one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStreams {
    /// `N x w1`, one row per electron.
    pub h1: Array2<f64>,
    /// `N*N x w2`, row `i*N + j` for the pair `(i, j)`.
    pub h2: Array2<f64>,
}

fn electron<'a>(r: &'a [f64], spec: &SystemSpec, i: usize) -> &'a [f64] {
    let d = spec.d();
    &r[i * d..(i + 1) * d]
}

/// Distance feature: the Euclidean norm, smoothed to `sqrt(x^2 + 1)` in
/// one dimension.
pub fn distance(v: &[f64]) -> f64 {
    let s = v.iter().map(|x| x * x).sum::<f64>();
    if v.len() == 1 {
        (s + 1.0).sqrt()
    } else {
        s.sqrt()
    }
}

/// Layer-0 streams: `(r_i - R_I, |r_i - R_I|, t)` over anchors, and
/// `(r_i - r_j, |r_i - r_j|, t)` over all ordered pairs including `i = j`,
/// with `|.|` as in [`distance`].
pub fn feature_streams(r: &[f64], t: f64, spec: &SystemSpec) -> Result<FeatureStreams> {
    if r.len() != spec.n_coords() {
        return Err(invalid(format!(
            "configuration has {} coordinates, expected {}",
            r.len(),
            spec.n_coords()
        )));
    }
    let n = spec.n_electrons();
    let d = spec.d();
    let anchors = spec.anchors();
    let mut h1 = Array2::zeros((n, spec.input_1e()));
    for i in 0..n {
        let ri = electron(r, spec, i);
        let mut c = 0;
        for a in &anchors {
            let diff: Vec<f64> = ri.iter().zip(a).map(|(x, y)| x - y).collect();
            for v in &diff {
                h1[[i, c]] = *v;
                c += 1;
            }
            h1[[i, c]] = distance(&diff);
            h1[[i, c + 1]] = t;
            c += 2;
        }
    }
    let mut h2 = Array2::zeros((n * n, d + 2));
    for i in 0..n {
        for j in 0..n {
            let diff: Vec<f64> = electron(r, spec, i)
                .iter()
                .zip(electron(r, spec, j))
                .map(|(x, y)| x - y)
                .collect();
            let row = i * n + j;
            for (a, v) in diff.iter().enumerate() {
                h2[[row, a]] = *v;
            }
            h2[[row, d]] = distance(&diff);
            h2[[row, d + 1]] = t;
        }
    }
    Ok(FeatureStreams { h1, h2 })
}

fn affine_tanh(x: &[f64], w: ArrayView2<f64>, b: ArrayView2<f64>) -> Vec<f64> {
    (0..w.ncols())
        .map(|c| {
            let s: f64 = x.iter().enumerate().map(|(k, v)| v * w[[k, c]]).sum();
            (s + b[[0, c]]).tanh()
        })
        .collect()
}

/// One permutation-equivariant layer applied to both streams.
pub fn equivariant_block(
    streams: &FeatureStreams,
    params: &NetworkParams,
    layer: usize,
    spec: &SystemSpec,
) -> FeatureStreams {
    let n = spec.n_electrons();
    let w1 = streams.h1.ncols();
    let w2 = streams.h2.ncols();
    let v = params.tensor(&format!("layer{layer}.V"));
    let b = params.tensor(&format!("layer{layer}.b"));
    let mut h1 = Array2::zeros((n, v.ncols()));
    for i in 0..n {
        let mut f: Vec<f64> = streams.h1.row(i).to_vec();
        for alpha in 0..2 {
            let mut g = vec![0.0; w1];
            let members = spec.channels()[alpha];
            let start = spec.channel_start(alpha);
            for j in start..start + members {
                for c in 0..w1 {
                    g[c] += streams.h1[[j, c]] / members as f64;
                }
            }
            f.extend(g);
        }
        for alpha in 0..2 {
            let mut g = vec![0.0; w2];
            let members = spec.channels()[alpha];
            let start = spec.channel_start(alpha);
            for j in start..start + members {
                for c in 0..w2 {
                    g[c] += streams.h2[[i * n + j, c]] / members as f64;
                }
            }
            f.extend(g);
        }
        let out = affine_tanh(&f, v, b);
        for (c, o) in out.iter().enumerate() {
            h1[[i, c]] = if v.ncols() == w1 {
                (o + streams.h1[[i, c]]) * FRAC_1_SQRT_2
            } else {
                *o
            };
        }
    }
    let h2 = if params.has(&format!("layer{layer}.W")) {
        let wm = params.tensor(&format!("layer{layer}.W"));
        let cb = params.tensor(&format!("layer{layer}.c"));
        let mut h2 = Array2::zeros((n * n, wm.ncols()));
        for row in 0..n * n {
            let x = streams.h2.row(row).to_vec();
            let out = affine_tanh(&x, wm, cb);
            for (c, o) in out.iter().enumerate() {
                h2[[row, c]] = if wm.ncols() == w2 {
                    (o + x[c]) * FRAC_1_SQRT_2
                } else {
                    *o
                };
            }
        }
        h2
    } else {
        streams.h2.clone()
    };
    FeatureStreams { h1, h2 }
}

/// One-electron features after the last layer.
pub fn final_features(r: &[f64], t: f64, params: &NetworkParams, spec: &SystemSpec) -> Result<Array2<f64>> {
    let mut s = feature_streams(r, t, spec)?;
    for l in 0..spec.layers {
        s = equivariant_block(&s, params, l, spec);
    }
    Ok(s.h1)
}

/// All `pi(t)` followed by all `Sigma(t)` entries.
pub fn envelope_generator(t: f64, params: &NetworkParams, spec: &SystemSpec) -> Vec<f64> {
    let (n_pi, n_sigma) = envelope_counts(spec);
    let w1 = params.tensor("envelope.gen_w1");
    let b1 = params.tensor("envelope.gen_b1");
    let w2 = params.tensor("envelope.gen_w2");
    let pi0 = params.tensor("envelope.pi0");
    let s0 = params.tensor("envelope.sigma0");
    let hidden: Array1<f64> = (0..w1.ncols())
        .map(|c| (t * w1[[0, c]] + b1[[0, c]]).tanh())
        .collect();
    (0..n_pi + n_sigma)
        .map(|c| {
            let base = if c < n_pi { pi0[[0, c]] } else { s0[[0, c - n_pi]] };
            base + hidden.iter().enumerate().map(|(h, v)| v * w2[[h, c]]).sum::<f64>()
        })
        .collect()
}

/// `sum_I pi_{iI}(t) exp(-|Sigma_{iI}(t) (r_j - R_I)|^p)` for orbital `i`
/// of determinant `k` in spin channel `alpha`.
pub fn envelope(
    r_j: &[f64],
    t: f64,
    params: &NetworkParams,
    spec: &SystemSpec,
    i: usize,
    k: usize,
    alpha: usize,
) -> f64 {
    let gen = envelope_generator(t, params, spec);
    envelope_from(&gen, r_j, spec, i, k, alpha)
}

fn envelope_from(gen: &[f64], r_j: &[f64], spec: &SystemSpec, i: usize, k: usize, alpha: usize) -> f64 {
    let (n_pi, _) = envelope_counts(spec);
    let d = spec.d();
    let p = spec.envelope_exponent;
    spec.anchors()
        .iter()
        .enumerate()
        .map(|(anchor, pos)| {
            let pi = gen[pi_column(spec, alpha, k, i, anchor)];
            let diff: Vec<f64> = r_j.iter().zip(pos).map(|(x, y)| x - y).collect();
            let mut q = 0.0;
            for a in 0..d {
                let u: f64 = (0..d)
                    .map(|b| gen[n_pi + sigma_column(spec, alpha, k, i, anchor, a, b)] * diff[b])
                    .sum();
                q += u * u;
            }
            pi * (-q.sqrt().powf(p)).exp()
        })
        .sum()
}

/// Phase network output `S^{ik}` on `concat(h_final, t)`.
pub fn phase_value(h_final: &[f64], t: f64, params: &NetworkParams, spec: &SystemSpec, i: usize, k: usize) -> f64 {
    let w1 = params.tensor("phase.w1");
    let b1 = params.tensor("phase.b1");
    let w2 = params.tensor("phase.w2");
    let b2 = params.tensor("phase.b2");
    let mut x = h_final.to_vec();
    x.push(t);
    let hidden = affine_tanh(&x, w1, b1);
    let c = k * spec.max_orbitals() + i;
    b2[[0, c]] + hidden.iter().enumerate().map(|(h, v)| v * w2[[h, c]]).sum::<f64>()
}

/// `exp(+i S^{ik})`.
pub fn phase_factor(h_final: &[f64], t: f64, params: &NetworkParams, spec: &SystemSpec, i: usize, k: usize) -> Complex64 {
    Complex64::cis(phase_value(h_final, t, params, spec, i, k))
}

/// Orbital matrix `phi_i^{k alpha}(r_j)`, rows `j` (electrons of the
/// channel), columns `i` (orbitals).
pub fn orbital_matrix(
    r: &[f64],
    t: f64,
    h_final: &Array2<f64>,
    params: &NetworkParams,
    spec: &SystemSpec,
    k: usize,
    alpha: usize,
) -> Array2<Complex64> {
    let name = if alpha == 0 { "up" } else { "down" };
    let w = params.tensor(&format!("orbital.{name}.w"));
    let g = params.tensor(&format!("orbital.{name}.g"));
    let n = spec.channels()[alpha];
    let start = spec.channel_start(alpha);
    let gen = envelope_generator(t, params, spec);
    Array2::from_shape_fn((n, n), |(j, i)| {
        let e = start + j;
        let col = k * n + i;
        let h = h_final.row(e);
        let base: f64 = g[[0, col]] + h.iter().enumerate().map(|(c, v)| v * w[[c, col]]).sum::<f64>();
        let env = envelope_from(&gen, electron(r, spec, e), spec, i, k, alpha);
        let h_vec = h.to_vec();
        base * env * phase_factor(&h_vec, t, params, spec, i, k)
    })
}

/// `log Psi` with `Psi = sum_k omega_k det(phi^{k up}) det(phi^{k down})`.
pub fn log_psi(r: &[f64], t: f64, params: &NetworkParams, spec: &SystemSpec) -> Result<Complex64> {
    let h = final_features(r, t, params, spec)?;
    let omega = params.tensor("det_weights");
    let mut terms = Vec::with_capacity(spec.n_determinants);
    for k in 0..spec.n_determinants {
        let w = omega[[k, 0]];
        let mut term = Complex64::new(w.abs().ln(), if w < 0.0 { std::f64::consts::PI } else { 0.0 });
        for alpha in 0..2 {
            if spec.channels()[alpha] == 0 {
                continue;
            }
            let m = orbital_matrix(r, t, &h, params, spec, k, alpha);
            let ld = complex_slogdet(&m)?;
            term += Complex64::new(ld.log_abs, ld.phase);
        }
        terms.push(term);
    }
    let out = complex_log_sum_exp(&terms);
    if !out.re.is_finite() {
        return Err(Error::NodeProximity { log_abs: out.re });
    }
    Ok(out)
}
