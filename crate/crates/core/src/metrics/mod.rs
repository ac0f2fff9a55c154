//! Relative space-time L2 error against closed-form references and Monte
//! Carlo observables.

mod error;
mod observe;

pub use error::{rel_l2_error, ErrorReport, QuadratureSpec, SliceError, ERROR_CSV_HEADER};
pub use observe::{mc_observable, observable_csv, Observable, ObservablePoint, OBSERVABLE_CSV_HEADER};

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::autodiff::{psi_values, WaveProgram};
use crate::error::Result;
use crate::oracles::AnalyticState;
use crate::trainer::PiecewiseSolution;

/// Anything that returns `psi` for a batch of configurations and times.
pub trait Evaluable: Sync {
    fn n_coords(&self) -> usize;
    fn psi(&self, coords: &Array2<f64>, times: &[f64]) -> Result<Vec<Complex64>>;
}

/// A single network with fixed parameters.
pub struct NetworkState<'a> {
    pub program: &'a dyn WaveProgram,
    pub params: &'a [f64],
}

impl Evaluable for NetworkState<'_> {
    fn n_coords(&self) -> usize {
        self.program.n_coords()
    }

    fn psi(&self, coords: &Array2<f64>, times: &[f64]) -> Result<Vec<Complex64>> {
        chunked(coords, times, |c, t| psi_values(self.program, self.params, c, t))
    }
}

impl Evaluable for PiecewiseSolution<'_> {
    fn n_coords(&self) -> usize {
        self.program.n_coords()
    }

    fn psi(&self, coords: &Array2<f64>, times: &[f64]) -> Result<Vec<Complex64>> {
        chunked(coords, times, |c, t| PiecewiseSolution::psi(self, c, t))
    }
}

impl Evaluable for AnalyticState {
    fn n_coords(&self) -> usize {
        AnalyticState::n_coords(self)
    }

    fn psi(&self, coords: &Array2<f64>, times: &[f64]) -> Result<Vec<Complex64>> {
        Ok(coords
            .rows()
            .into_iter()
            .zip(times)
            .map(|(r, &t)| self.eval(&r.to_vec(), t))
            .collect())
    }
}

const CHUNK: usize = 2048;

/// Evaluates large batches in parallel pieces to bound tape size.
fn chunked<F>(coords: &Array2<f64>, times: &[f64], f: F) -> Result<Vec<Complex64>>
where
    F: Fn(&Array2<f64>, &[f64]) -> Result<Vec<Complex64>> + Sync,
{
    if coords.nrows() <= CHUNK {
        return f(coords, times);
    }
    let starts: Vec<usize> = (0..coords.nrows()).step_by(CHUNK).collect();
    let parts: Vec<Result<Vec<Complex64>>> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + CHUNK).min(coords.nrows());
            f(&coords.slice(ndarray::s![s..e, ..]).to_owned(), &times[s..e])
        })
        .collect();
    let mut out = Vec::with_capacity(coords.nrows());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
