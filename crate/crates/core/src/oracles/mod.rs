//! Closed-form reference solutions of the benchmark problems.

mod scaling;
mod states;

pub use scaling::{ermakov_residual, scaled_time, scaling_coefficients, ScalingFunctions};
pub use states::{
    fermion_e0, fermion_omega, fermion_psi, ho_norm, ho_state, hydrogen_energy, hydrogen_norm,
    hydrogen_state, monopole_ref, AnalyticState, HoCoeff, HydrogenCoeff, OracleProgram,
};

use crate::objective::HamiltonianKind;

/// Potential energy of `h` at configuration `r` and time `t`.
pub fn potential(h: &HamiltonianKind, r: &[f64], t: f64) -> f64 {
    h.potential(r, t)
}
