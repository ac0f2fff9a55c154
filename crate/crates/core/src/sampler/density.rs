use ndarray::Array2;

use crate::autodiff::{log_abs_values, WaveProgram, NODE_LOG_ABS_THRESHOLD};
use crate::objective::HamiltonianKind;
use crate::oracles::AnalyticState;

/// Walkers closer than this to a Coulomb singularity are rejected.
pub const COALESCENCE_CUTOFF: f64 = 1e-6;

/// Unnormalized log density `2 log|psi(r, t)|` for a batch of
/// configurations; `None` marks a rejected point (node or singularity).
pub trait TimeDensity: Sync {
    fn n_coords(&self) -> usize;
    fn log_density(&self, coords: &Array2<f64>, t: f64) -> Vec<Option<f64>>;
}

/// `|psi_eta|^2` of a trained or training network.
pub struct NetworkDensity<'a> {
    pub program: &'a dyn WaveProgram,
    pub params: &'a [f64],
    /// Used only for the Coulomb proximity rejection.
    pub hamiltonian: Option<&'a HamiltonianKind>,
}

impl TimeDensity for NetworkDensity<'_> {
    fn n_coords(&self) -> usize {
        self.program.n_coords()
    }

    fn log_density(&self, coords: &Array2<f64>, t: f64) -> Vec<Option<f64>> {
        let times = vec![t; coords.nrows()];
        let la = match log_abs_values(self.program, self.params, coords, &times) {
            Ok(v) => v,
            Err(_) => return vec![None; coords.nrows()],
        };
        la.iter()
            .enumerate()
            .map(|(b, &l)| {
                if !l.is_finite() || l < NODE_LOG_ABS_THRESHOLD {
                    return None;
                }
                if let Some(h) = self.hamiltonian {
                    let r = coords.row(b).to_vec();
                    if h.min_coalescence_distance(&r).is_some_and(|d| d < COALESCENCE_CUTOFF) {
                        return None;
                    }
                }
                Some(2.0 * l)
            })
            .collect()
    }
}

/// `|psi_0|^2` of a closed-form state.
pub struct OracleDensity<'a> {
    pub state: &'a AnalyticState,
}

impl TimeDensity for OracleDensity<'_> {
    fn n_coords(&self) -> usize {
        self.state.n_coords()
    }

    fn log_density(&self, coords: &Array2<f64>, t: f64) -> Vec<Option<f64>> {
        let h = self.state.hamiltonian();
        coords
            .rows()
            .into_iter()
            .map(|row| {
                let r = row.to_vec();
                if h.min_coalescence_distance(&r).is_some_and(|d| d < COALESCENCE_CUTOFF) {
                    return None;
                }
                let l = self.state.eval(&r, t).norm().ln();
                (l.is_finite() && l >= NODE_LOG_ABS_THRESHOLD).then_some(2.0 * l)
            })
            .collect()
    }
}
