use num_complex::Complex64;

use super::hamiltonian::HamiltonianKind;
use crate::autodiff::DerivativeBundle;
use crate::error::Result;

/// `E_L = -1/(2m) sum_j [d_j^2 log psi + (d_j log psi)^2] + V(r, t)`.
pub fn local_energy(
    bundle: &DerivativeBundle,
    r: &[f64],
    t: f64,
    h: &HamiltonianKind,
) -> Result<Complex64> {
    bundle.check()?;
    Ok(-h.kinetic_prefactor() * bundle.lap_over_psi() + h.potential(r, t))
}

/// Pointwise TDSE violation `|i d_t log psi - E_L|^2`.
pub fn residual_density(
    bundle: &DerivativeBundle,
    r: &[f64],
    t: f64,
    h: &HamiltonianKind,
) -> Result<f64> {
    let el = local_energy(bundle, r, t, h)?;
    Ok((Complex64::i() * bundle.dlog_dt - el).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::evaluate_bundle;
    use crate::oracles::{fermion_e0, AnalyticState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bundle_at(s: &AnalyticState, r: &[f64], t: f64) -> DerivativeBundle {
        evaluate_bundle(&s.program(), &[], r, t).unwrap()
    }

    #[test]
    fn oscillator_eigenstates_have_constant_local_energy() {
        let h = HamiltonianKind::harmonic_oscillator();
        for (n, e) in [(0usize, 0.5), (1, 1.5)] {
            let s = AnalyticState::ho(&[n]);
            for &x in &[-1.7, 0.3, 2.2] {
                let el = local_energy(&bundle_at(&s, &[x], 0.4), &[x], 0.4, &h).unwrap();
                assert!((el - e).norm() < 1e-12, "n={n} x={x} el={el}");
            }
        }
    }

    #[test]
    fn hydrogen_ground_state_energy() {
        let s = AnalyticState::named("h_1s").unwrap();
        let r = [1.0, 0.0, 0.0];
        let el = local_energy(&bundle_at(&s, &r, 0.0), &r, 0.0, &HamiltonianKind::hydrogen()).unwrap();
        assert!((el - (-0.5)).norm() < 1e-12);
    }

    #[test]
    fn frozen_gaussian_has_constant_residual() {
        // exp(-r^2/2) with no phase winding: i * 0 - 0.5
        let b = DerivativeBundle {
            log_psi: Complex64::new(-0.5, 0.0),
            grad_r: vec![Complex64::new(-1.0, 0.0)],
            laplacian_log: Complex64::new(-1.0, 0.0),
            dlog_dt: Complex64::new(0.0, 0.0),
            valid: true,
        };
        let rho = residual_density(&b, &[1.0], 0.7, &HamiltonianKind::harmonic_oscillator()).unwrap();
        assert!((rho - 0.25).abs() < 1e-15);
    }

    #[test]
    fn invalid_bundle_is_rejected() {
        let b = DerivativeBundle {
            log_psi: Complex64::new(-400.0, 0.0),
            grad_r: vec![Complex64::new(0.0, 0.0)],
            laplacian_log: Complex64::new(0.0, 0.0),
            dlog_dt: Complex64::new(0.0, 0.0),
            valid: false,
        };
        assert!(residual_density(&b, &[0.0], 0.0, &HamiltonianKind::harmonic_oscillator()).is_err());
    }

    #[test]
    fn every_oracle_solves_its_tdse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let names = [
            "ho0", "ho1", "ho2", "ho01", "ho012", "fermions2", "fermions3", "h_1s", "h_2s",
            "h_2p_z", "h_3s", "h_1s2p_z", "h_2p_x2p_z", "h_1s2s3s", "h_2s2p_z3d_z2",
        ];
        for name in names {
            let s = AnalyticState::named(name).unwrap();
            let h = s.hamiltonian();
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let r: Vec<f64> = (0..s.n_coords()).map(|_| rng.gen_range(-2.5..2.5)).collect();
                let t = rng.gen_range(0.0..3.0);
                let rho = residual_density(&bundle_at(&s, &r, t), &r, t, &h).unwrap();
                worst = worst.max(rho);
            }
            assert!(worst <= 1e-8, "{name}: worst residual {worst:e}");
        }
    }

    #[test]
    fn pre_quench_ground_state_energy() {
        for n in [2usize, 3] {
            let s = AnalyticState::fermions(n);
            let h = s.hamiltonian();
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            for _ in 0..20 {
                let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let el = local_energy(&bundle_at(&s, &r, -0.5), &r, -0.5, &h).unwrap();
                let e0 = 0.5 * (1.0 + (n * n - 1) as f64 * ((1 + n) as f64).sqrt());
                assert!((el - e0).norm() <= 1e-8, "N={n} el={el} e0={e0}");
                assert!((fermion_e0(n, 1.0) - e0).abs() < 1e-14);
            }
        }
    }
}
