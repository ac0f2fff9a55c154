use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::oracles::ScalingFunctions;

/// A fixed point charge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nucleus {
    pub position: Vec<f64>,
    pub charge: f64,
}

/// Linearly polarized pulse along `x`: `E(t) = peak * s(t) * sin(omega t)`
/// with a trapezoidal envelope `s` of period `T = 2 pi / omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserField {
    pub peak: f64,
    pub omega: f64,
}

impl LaserField {
    /// Field parameters of the stretched H2 benchmark.
    pub fn h2_benchmark() -> Self {
        Self {
            peak: 0.07,
            omega: 0.1,
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// Piecewise ramp: up over one period, flat for one, down over one.
    pub fn envelope(&self, t: f64) -> f64 {
        let tp = self.period();
        if (0.0..tp).contains(&t) {
            t / tp
        } else if (tp..2.0 * tp).contains(&t) {
            1.0
        } else if (2.0 * tp..3.0 * tp).contains(&t) {
            3.0 - t / tp
        } else {
            0.0
        }
    }

    pub fn field(&self, t: f64) -> f64 {
        self.peak * self.envelope(t) * (self.omega * t).sin()
    }
}

/// Nuclear half-separation of the stretched H2 geometry (bohr).
pub const H2_HALF_BOND: f64 = 1.393038;

pub fn h2_nuclei() -> Vec<Nucleus> {
    vec![
        Nucleus {
            position: vec![-H2_HALF_BOND, 0.0, 0.0],
            charge: 1.0,
        },
        Nucleus {
            position: vec![H2_HALF_BOND, 0.0, 0.0],
            charge: 1.0,
        },
    ]
}

/// Hamiltonian catalogue. Every variant has kinetic term
/// `-1/(2m) sum_j d^2/dr_j^2` (with `m = 1` except for the oscillator)
/// plus the potential returned by [`HamiltonianKind::potential`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianKind {
    /// `V = sum_i m omega^2 r_i^2 / 2` in one dimension.
    HarmonicOscillator1D { mass: f64, omega: f64 },
    /// Trap quenched from `omega0` to `omega_f` at `t = 0` with pairwise
    /// quadratic coupling `g(t)/2 sum_{i<j} (r_i - r_j)^2`,
    /// `g(t) = g0 / L(t)^4` after the quench.
    TrappedInteracting1D { omega0: f64, omega_f: f64, g0: f64 },
    /// Electrons in the field of fixed nuclei, with electron repulsion.
    Coulomb3D { nuclei: Vec<Nucleus> },
    /// Coulomb system driven in length gauge by a uniform field along `x`.
    MolecularLaser {
        nuclei: Vec<Nucleus>,
        field: LaserField,
    },
}

impl HamiltonianKind {
    pub fn harmonic_oscillator() -> Self {
        Self::HarmonicOscillator1D {
            mass: 1.0,
            omega: 1.0,
        }
    }

    pub fn hydrogen() -> Self {
        Self::Coulomb3D {
            nuclei: vec![Nucleus {
                position: vec![0.0, 0.0, 0.0],
                charge: 1.0,
            }],
        }
    }

    pub fn h2_laser() -> Self {
        Self::MolecularLaser {
            nuclei: h2_nuclei(),
            field: LaserField::h2_benchmark(),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::HarmonicOscillator1D { .. } | Self::TrappedInteracting1D { .. } => 1,
            Self::Coulomb3D { .. } | Self::MolecularLaser { .. } => 3,
        }
    }

    pub fn nuclei(&self) -> &[Nucleus] {
        match self {
            Self::Coulomb3D { nuclei } | Self::MolecularLaser { nuclei, .. } => nuclei,
            _ => &[],
        }
    }

    /// Prefactor of the Laplacian in the kinetic energy, `1/(2m)`.
    pub fn kinetic_prefactor(&self) -> f64 {
        match self {
            Self::HarmonicOscillator1D { mass, .. } => 0.5 / mass,
            _ => 0.5,
        }
    }

    /// Potential energy at configuration `r` (flattened `N x d`) and time
    /// `t`. Coulomb coalescence points return `+inf`.
    pub fn potential(&self, r: &[f64], t: f64) -> f64 {
        match self {
            Self::HarmonicOscillator1D { mass, omega } => {
                0.5 * mass * omega * omega * r.iter().map(|x| x * x).sum::<f64>()
            }
            Self::TrappedInteracting1D { omega0, omega_f, g0 } => {
                let (w, g) = if t < 0.0 {
                    (*omega0, *g0)
                } else {
                    let s = ScalingFunctions::at(t, *omega0, *omega_f, *g0, r.len());
                    (*omega_f, s.g_t)
                };
                let trap = 0.5 * w * w * r.iter().map(|x| x * x).sum::<f64>();
                let mut pair = 0.0;
                for i in 0..r.len() {
                    for j in 0..i {
                        pair += (r[i] - r[j]).powi(2);
                    }
                }
                trap + 0.5 * g * pair
            }
            Self::Coulomb3D { nuclei } => coulomb(nuclei, r),
            Self::MolecularLaser { nuclei, field } => {
                let sum_x: f64 = r.chunks(3).map(|v| v[0]).sum();
                coulomb(nuclei, r) - field.field(t) * sum_x
            }
        }
    }

    /// Smallest electron-nucleus or electron-electron distance, for
    /// Coulomb variants; `None` otherwise.
    pub fn min_coalescence_distance(&self, r: &[f64]) -> Option<f64> {
        let nuclei = match self {
            Self::Coulomb3D { nuclei } | Self::MolecularLaser { nuclei, .. } => nuclei,
            _ => return None,
        };
        let els: Vec<&[f64]> = r.chunks(3).collect();
        let mut best = f64::INFINITY;
        for (i, e) in els.iter().enumerate() {
            for n in nuclei {
                best = best.min(dist(e, &n.position));
            }
            for f in &els[..i] {
                best = best.min(dist(e, f));
            }
        }
        Some(best)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn coulomb(nuclei: &[Nucleus], r: &[f64]) -> f64 {
    let els: Vec<&[f64]> = r.chunks(3).collect();
    let mut v = 0.0;
    for (i, e) in els.iter().enumerate() {
        for n in nuclei {
            let d = dist(e, &n.position);
            if d == 0.0 {
                return f64::INFINITY;
            }
            v -= n.charge / d;
        }
        for f in &els[..i] {
            let d = dist(e, f);
            if d == 0.0 {
                return f64::INFINITY;
            }
            v += 1.0 / d;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_potential() {
        assert_eq!(HamiltonianKind::harmonic_oscillator().potential(&[2.0], 3.1), 2.0);
    }

    #[test]
    fn laser_envelope_breakpoints() {
        let f = LaserField::h2_benchmark();
        let tp = f.period();
        assert_eq!(f.envelope(0.5 * tp), 0.5);
        assert_eq!(f.envelope(1.5 * tp), 1.0);
        assert!((f.envelope(2.5 * tp) - 0.5).abs() < 1e-15);
        assert_eq!(f.envelope(3.5 * tp), 0.0);
        assert_eq!(f.envelope(-1.0), 0.0);
        assert!((tp - 20.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn laser_field_value_on_plateau() {
        let f = LaserField::h2_benchmark();
        let t = 1.5 * f.period();
        // s = 1 on the plateau
        assert!((f.field(t) - 0.07 * (0.1 * t).sin()).abs() < 1e-15);
    }

    #[test]
    fn h2_geometry() {
        let n = h2_nuclei();
        let bond = (n[1].position[0] - n[0].position[0]).abs();
        assert!((bond - 2.786076).abs() < 1e-12);
        assert!(n.iter().all(|x| x.charge == 1.0 && x.position[1] == 0.0 && x.position[2] == 0.0));
    }

    #[test]
    fn h2_potential_includes_field_coupling() {
        let h = HamiltonianKind::h2_laser();
        let r = [0.3, 0.2, -0.1, -0.5, 0.4, 0.6];
        let t = 1.5 * LaserField::h2_benchmark().period();
        let without = HamiltonianKind::Coulomb3D { nuclei: h2_nuclei() }.potential(&r, t);
        let e = LaserField::h2_benchmark().field(t);
        assert!((h.potential(&r, t) - (without - e * (0.3 - 0.5))).abs() < 1e-14);
    }

    #[test]
    fn coulomb_singularity_is_infinite() {
        let h = HamiltonianKind::hydrogen();
        assert_eq!(h.potential(&[0.0, 0.0, 0.0], 0.0), f64::INFINITY);
        assert!((h.potential(&[0.0, 0.0, 2.0], 0.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn quench_potential_continuous_in_interaction() {
        let h = HamiltonianKind::TrappedInteracting1D {
            omega0: 1.0,
            omega_f: 2.0,
            g0: 1.0,
        };
        let r = [0.4, -0.3];
        let before = h.potential(&r, -1e-12);
        let after = h.potential(&r, 0.0);
        // only the trap term changes at the quench: (omega_f^2 - omega0^2)/2 * sum r^2
        let jump = 0.5 * (4.0 - 1.0) * (0.16 + 0.09);
        assert!((after - before - jump).abs() < 1e-12);
    }
}
