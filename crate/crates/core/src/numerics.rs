//! Special functions, quadrature rules and complex linear algebra.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{invalid, Result};

/// A Gauss-type quadrature rule on a finite interval.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: (f64, f64),
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre rule with `n` nodes mapped onto `[lo, hi]`.
///
/// Roots of `P_n` are polished by Newton iteration from Chebyshev-like
/// initial guesses.
pub fn gauss_legendre(n: usize, lo: f64, hi: f64) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(invalid("gauss_legendre needs n >= 1"));
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("gauss_legendre bounds must be finite"));
    }
    if lo >= hi {
        return Err(invalid(format!("gauss_legendre needs lo < hi, got [{lo}, {hi}]")));
    }

    let mut x_ref = vec![0.0; n];
    let mut w_ref = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // i-th largest root
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        x_ref[i] = -z;
        x_ref[n - 1 - i] = z;
        w_ref[i] = w;
        w_ref[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        x_ref[n / 2] = 0.0;
    }

    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Ok(QuadratureRule {
        nodes: x_ref.iter().map(|x| mid + half * x).collect(),
        weights: w_ref.iter().map(|w| w * half).collect(),
        interval: (lo, hi),
    })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Log-magnitude and phase of a complex determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    pub phase: f64,
}

impl LogDet {
    pub fn is_singular(&self) -> bool {
        self.log_abs == f64::NEG_INFINITY
    }

    pub fn to_complex(self) -> Complex64 {
        if self.is_singular() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(self.log_abs.exp(), self.phase)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Determinant of a square complex matrix in log domain, via LU with
/// partial pivoting.
pub fn complex_slogdet(m: &Array2<Complex64>) -> Result<LogDet> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(invalid(format!("complex_slogdet needs a square matrix, got {rows}x{cols}")));
    }
    let n = rows;
    let mut a = m.clone();
    let mut log_abs = 0.0;
    let mut phase = 0.0;
    for k in 0..n {
        let mut piv = k;
        let mut best = a[[k, k]].norm();
        for r in (k + 1)..n {
            let v = a[[r, k]].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Ok(LogDet {
                log_abs: f64::NEG_INFINITY,
                phase: 0.0,
            });
        }
        if piv != k {
            for c in 0..n {
                a.swap([k, c], [piv, c]);
            }
            phase += PI;
        }
        let pivot = a[[k, k]];
        log_abs += pivot.norm().ln();
        phase += pivot.arg();
        for r in (k + 1)..n {
            let factor = a[[r, k]] / pivot;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in (k + 1)..n {
                let akc = a[[k, c]];
                a[[r, c]] -= factor * akc;
            }
        }
    }
    Ok(LogDet {
        log_abs,
        phase: wrap_phase(phase),
    })
}

/// `log(sum_k exp(a_k))` for complex logs; the real parts set the scale.
pub fn complex_log_sum_exp(terms: &[Complex64]) -> Complex64 {
    let max = terms
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    let sum: Complex64 = terms.iter().map(|z| (z - max).exp()).sum();
    let norm = sum.norm();
    if norm == 0.0 {
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    Complex64::new(max + norm.ln(), sum.arg())
}

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let mut h0 = 1.0;
    if n == 0 {
        return h0;
    }
    let mut h1 = 2.0 * x;
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Associated Laguerre polynomial `L_n^k(x)`.
pub fn assoc_laguerre(n: usize, k: usize, x: f64) -> f64 {
    let kf = k as f64;
    let mut l0 = 1.0;
    if n == 0 {
        return l0;
    }
    let mut l1 = 1.0 + kf - x;
    for m in 1..n {
        let mf = m as f64;
        let l2 = ((2.0 * mf + 1.0 + kf - x) * l1 - (mf + kf) * l0) / (mf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Real orbital labels up to `l = 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum OrbitalLabel {
    #[serde(rename = "s")]
    S,
    #[serde(rename = "p_x")]
    Px,
    #[serde(rename = "p_y")]
    Py,
    #[serde(rename = "p_z")]
    Pz,
    #[serde(rename = "d_xy")]
    Dxy,
    #[serde(rename = "d_yz")]
    Dyz,
    #[serde(rename = "d_xz")]
    Dxz,
    #[serde(rename = "d_z2")]
    Dz2,
    #[serde(rename = "d_x2-y2")]
    Dx2y2,
}

impl OrbitalLabel {
    pub fn l(self) -> usize {
        match self {
            OrbitalLabel::S => 0,
            OrbitalLabel::Px | OrbitalLabel::Py | OrbitalLabel::Pz => 1,
            _ => 2,
        }
    }

    pub fn all() -> [OrbitalLabel; 9] {
        use OrbitalLabel::*;
        [S, Px, Py, Pz, Dxy, Dyz, Dxz, Dz2, Dx2y2]
    }

    pub fn parse(name: &str) -> Result<Self> {
        use OrbitalLabel::*;
        Ok(match name {
            "s" => S,
            "p_x" | "px" => Px,
            "p_y" | "py" => Py,
            "p_z" | "pz" => Pz,
            "d_xy" | "dxy" => Dxy,
            "d_yz" | "dyz" => Dyz,
            "d_xz" | "dxz" => Dxz,
            "d_z2" | "d_z²" | "dz2" => Dz2,
            "d_x2-y2" | "d_x²-y²" | "dx2y2" => Dx2y2,
            other => return Err(invalid(format!("unknown orbital label {other:?}"))),
        })
    }

    /// Coefficients of the solid harmonic as a polynomial in (x, y, z).
    ///
    /// Monomials are encoded by exponent triples.
    pub fn polynomial(self) -> Vec<(f64, [u32; 3])> {
        use OrbitalLabel::*;
        let c_s = 0.5 / PI.sqrt();
        let c_p = (3.0 / (4.0 * PI)).sqrt();
        let c_d = 0.5 * (15.0 / PI).sqrt();
        let c_z2 = 0.25 * (5.0 / PI).sqrt();
        let c_x2y2 = 0.25 * (15.0 / PI).sqrt();
        match self {
            S => vec![(c_s, [0, 0, 0])],
            Px => vec![(c_p, [1, 0, 0])],
            Py => vec![(c_p, [0, 1, 0])],
            Pz => vec![(c_p, [0, 0, 1])],
            Dxy => vec![(c_d, [1, 1, 0])],
            Dyz => vec![(c_d, [0, 1, 1])],
            Dxz => vec![(c_d, [1, 0, 1])],
            Dz2 => vec![
                (2.0 * c_z2, [0, 0, 2]),
                (-c_z2, [2, 0, 0]),
                (-c_z2, [0, 2, 0]),
            ],
            Dx2y2 => vec![(c_x2y2, [2, 0, 0]), (-c_x2y2, [0, 2, 0])],
        }
    }
}

/// Real spherical harmonic times `r^l`, evaluated in Cartesian form.
pub fn real_solid_harmonic(l: usize, label: OrbitalLabel, v: [f64; 3]) -> Result<f64> {
    if label.l() != l {
        return Err(invalid(format!(
            "orbital label {label:?} has l = {}, requested l = {l}",
            label.l()
        )));
    }
    Ok(label
        .polynomial()
        .iter()
        .map(|(c, e)| c * v[0].powi(e[0] as i32) * v[1].powi(e[1] as i32) * v[2].powi(e[2] as i32))
        .sum())
}

/// `prod_{i<j} (r_j - r_i)`.
///
/// The product is taken over the sorted coordinates and the sign comes from
/// the parity of the sorting permutation, so swapping two entries negates the
/// result bit-exactly.
pub fn vandermonde(r: &[f64]) -> f64 {
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut inversions = 0usize;
    for i in 0..r.len() {
        for j in (i + 1)..r.len() {
            if r[i] > r[j] {
                inversions += 1;
            }
        }
    }
    let mut p = 1.0;
    for i in 0..sorted.len() {
        for j in (i + 1)..sorted.len() {
            p *= sorted[j] - sorted[i];
        }
    }
    if inversions % 2 == 1 {
        -p
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gauss_legendre_small_rules() {
        let r1 = gauss_legendre(1, -1.0, 1.0).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert_relative_eq!(r1.weights[0], 2.0, epsilon = 1e-15);

        let r2 = gauss_legendre(2, -1.0, 1.0).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert_relative_eq!(r2.nodes[0], -s, epsilon = 1e-15);
        assert_relative_eq!(r2.nodes[1], s, epsilon = 1e-15);
        assert_relative_eq!(r2.weights[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(r2.weights[1], 1.0, epsilon = 1e-14);

        let r3 = gauss_legendre(3, -1.0, 1.0).unwrap();
        assert_relative_eq!(r3.integrate(|x| x.powi(4)), 0.4, epsilon = 1e-14);
    }

    #[test]
    fn gauss_legendre_exact_to_degree_2n_minus_1() {
        for n in [1usize, 2, 3, 5, 8, 16, 33, 64] {
            let (lo, hi) = (-0.7, 2.3);
            let rule = gauss_legendre(n, lo, hi).unwrap();
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - (hi - lo)).abs() < 1e-12, "n={n} wsum={wsum}");
            assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(rule.nodes.iter().all(|&x| x > lo && x < hi));
            for k in 0..(2 * n) {
                let exact = (hi.powi(k as i32 + 1) - lo.powi(k as i32 + 1)) / (k as f64 + 1.0);
                let got = rule.integrate(|x| x.powi(k as i32));
                let scale = exact.abs().max(1.0);
                assert!(
                    (got - exact).abs() / scale < 1e-12,
                    "n={n} k={k} got={got} exact={exact}"
                );
            }
        }
    }

    #[test]
    fn gauss_legendre_rejects_bad_input() {
        assert!(gauss_legendre(0, 0.0, 1.0).is_err());
        assert!(gauss_legendre(3, 1.0, 1.0).is_err());
        assert!(gauss_legendre(3, f64::NEG_INFINITY, 1.0).is_err());
        assert!(gauss_legendre(3, 0.0, f64::NAN).is_err());
    }

    fn cofactor_det(m: &[Vec<Complex64>]) -> Complex64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        let mut det = Complex64::new(0.0, 0.0);
        for c in 0..n {
            let minor: Vec<Vec<Complex64>> = m[1..]
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(j, _)| *j != c)
                        .map(|(_, v)| *v)
                        .collect()
                })
                .collect();
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * m[0][c] * cofactor_det(&minor);
        }
        det
    }

    #[test]
    fn slogdet_identity_and_swap() {
        let eye: Array2<Complex64> = Array2::eye(3);
        let ld = complex_slogdet(&eye).unwrap();
        assert_eq!(ld.log_abs, 0.0);
        assert_eq!(ld.phase, 0.0);

        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let swap = array![[zero, one], [one, zero]];
        let ld = complex_slogdet(&swap).unwrap();
        assert_relative_eq!(ld.log_abs, 0.0);
        assert_relative_eq!(ld.phase, PI, epsilon = 1e-15);
    }

    #[test]
    fn slogdet_matches_cofactor_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=5 {
            let rows: Vec<Vec<Complex64>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect()
                })
                .collect();
            let m = Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]);
            let got = complex_slogdet(&m).unwrap().to_complex();
            let want = cofactor_det(&rows);
            assert!((got - want).norm() / want.norm() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn slogdet_singular_and_nonsquare() {
        let z = Array2::<Complex64>::zeros((2, 2));
        assert!(complex_slogdet(&z).unwrap().is_singular());
        let r = Array2::<Complex64>::zeros((2, 3));
        assert!(complex_slogdet(&r).is_err());
    }

    #[test]
    fn slogdet_permutation_shifts_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4;
        let m = Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let base = complex_slogdet(&m).unwrap();
        // swap columns 0 and 2 (one transposition), then 1 and 3 (two)
        let mut p1 = m.clone();
        for r in 0..n {
            p1.swap([r, 0], [r, 2]);
        }
        let one = complex_slogdet(&p1).unwrap();
        assert_relative_eq!(one.log_abs, base.log_abs, epsilon = 1e-12);
        assert!(wrap_phase(one.phase - base.phase - PI).abs() < 1e-10);
        let mut p2 = p1.clone();
        for r in 0..n {
            p2.swap([r, 1], [r, 3]);
        }
        let two = complex_slogdet(&p2).unwrap();
        assert!(wrap_phase(two.phase - base.phase).abs() < 1e-10);
    }

    #[test]
    fn log_sum_exp_matches_naive_sum() {
        let terms = [Complex64::new(-1.0, 0.3), Complex64::new(0.5, 2.0), Complex64::new(-3.0, -1.0)];
        let naive: Complex64 = terms.iter().map(|z| z.exp()).sum();
        let got = complex_log_sum_exp(&terms).exp();
        assert!((got - naive).norm() / naive.norm() < 1e-12);
    }

    fn hermite_series(n: usize, x: f64) -> f64 {
        // H_n(x) = n! sum_m (-1)^m (2x)^{n-2m} / (m! (n-2m)!)
        let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
        (0..=n / 2)
            .map(|m| {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact(n) * (2.0 * x).powi((n - 2 * m) as i32) / (fact(m) * fact(n - 2 * m))
            })
            .sum()
    }

    fn laguerre_series(n: usize, k: usize, x: f64) -> f64 {
        // L_n^k(x) = sum_i (-1)^i C(n+k, n-i) x^i / i!
        let fact = |m: usize| (1..=m).map(|v| v as f64).product::<f64>();
        let binom = |a: usize, b: usize| fact(a) / (fact(b) * fact(a - b));
        (0..=n)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * binom(n + k, n - i) * x.powi(i as i32) / fact(i)
            })
            .sum()
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite(0, 3.7), 1.0);
        assert_eq!(hermite(1, 2.0), 4.0);
        assert_eq!(hermite(3, 1.0), -4.0);
    }

    #[test]
    fn laguerre_values() {
        assert_eq!(assoc_laguerre(0, 4, 2.5), 1.0);
        assert_eq!(assoc_laguerre(1, 1, 2.0), 0.0);
        assert_relative_eq!(assoc_laguerre(2, 3, 1.0), laguerre_series(2, 3, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn polynomials_match_series_oracles() {
        for n in 0..=8 {
            for i in 0..=40 {
                let x = -5.0 + 0.25 * i as f64;
                let (a, b) = (hermite(n, x), hermite_series(n, x));
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "H_{n}({x})");
                if x >= 0.0 {
                    for k in 0..=5 {
                        let (a, b) = (assoc_laguerre(n, k, x), laguerre_series(n, k, x));
                        assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "L_{n}^{k}({x})");
                    }
                }
            }
        }
    }

    #[test]
    fn solid_harmonic_values() {
        let s = real_solid_harmonic(0, OrbitalLabel::S, [0.3, -2.0, 1.0]).unwrap();
        assert_relative_eq!(s, 1.0 / (4.0 * PI).sqrt(), epsilon = 1e-15);
        let pz = real_solid_harmonic(1, OrbitalLabel::Pz, [0.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(pz, (3.0 / (4.0 * PI)).sqrt(), epsilon = 1e-15);
        let dz2 = real_solid_harmonic(2, OrbitalLabel::Dz2, [0.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(dz2, (5.0 / (16.0 * PI)).sqrt() * 2.0, epsilon = 1e-15);
        assert!(real_solid_harmonic(1, OrbitalLabel::S, [0.0; 3]).is_err());
        assert!(OrbitalLabel::parse("f_xyz").is_err());
    }

    #[test]
    fn solid_harmonics_are_orthonormal_on_the_sphere() {
        // product rule: Gauss-Legendre in cos(theta), trapezoid in phi
        let gl = gauss_legendre(12, -1.0, 1.0).unwrap();
        let n_phi = 24;
        let labels = OrbitalLabel::all();
        for a in labels {
            for b in labels {
                let mut acc = 0.0;
                for (c, w) in gl.iter() {
                    let st = (1.0 - c * c).sqrt();
                    for k in 0..n_phi {
                        let phi = 2.0 * PI * k as f64 / n_phi as f64;
                        let v = [st * phi.cos(), st * phi.sin(), c];
                        acc += w
                            * (2.0 * PI / n_phi as f64)
                            * real_solid_harmonic(a.l(), a, v).unwrap()
                            * real_solid_harmonic(b.l(), b, v).unwrap();
                    }
                }
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((acc - want).abs() < 1e-12, "{a:?} {b:?} -> {acc}");
            }
        }
    }

    #[test]
    fn vandermonde_values() {
        assert_eq!(vandermonde(&[2.5]), 1.0);
        assert_eq!(vandermonde(&[0.0, 1.0]), 1.0);
        assert_eq!(vandermonde(&[0.0, 1.0, 3.0]), 6.0);
    }

    proptest! {
        #[test]
        fn vandermonde_is_antisymmetric(r in proptest::collection::vec(-3.0f64..3.0, 2..6)) {
            let base = vandermonde(&r);
            for i in 0..r.len() {
                for j in (i + 1)..r.len() {
                    let mut s = r.clone();
                    s.swap(i, j);
                    prop_assert_eq!(vandermonde(&s), -base);
                }
            }
        }
    }
}
