use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Evaluable;
use crate::error::{invalid, Result};
use crate::numerics::gauss_legendre;
use crate::oracles::AnalyticState;

/// Quadrature resolution and truncation for the error metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    /// Half-width of the Cartesian box for one-dimensional systems.
    pub box_half_width: f64,
    /// Gauss-Legendre nodes per Cartesian coordinate.
    pub spatial_order: usize,
    /// Radial cutoff for single-electron three-dimensional systems.
    pub radial_cutoff: f64,
    pub radial_order: usize,
    pub polar_order: usize,
    pub azimuthal_points: usize,
    pub time_order: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            box_half_width: 8.0,
            spatial_order: 64,
            radial_cutoff: 60.0,
            radial_order: 96,
            polar_order: 16,
            azimuthal_points: 16,
            time_order: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceError {
    pub t: f64,
    /// Time quadrature weight.
    pub weight: f64,
    /// `int |a psi - psi_ref|^2 dr` at `t`, `a` the alignment constant.
    pub numerator: f64,
    /// `int |psi_ref|^2 dr` at `t`.
    pub denominator: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub rel_l2: f64,
    pub per_time: Vec<SliceError>,
    /// Complex factor applied to the prediction, fitted at `t = 0`.
    pub alignment: (f64, f64),
    /// Largest reference density on the edge of the domain relative to the
    /// largest inside it, at `t = 0`.
    pub edge_density_ratio: f64,
    pub warning: Option<String>,
    pub quadrature: QuadratureSpec,
}

pub const ERROR_CSV_HEADER: &str = "time,weight,numerator,denominator,slice_rel_l2";

impl ErrorReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(ERROR_CSV_HEADER);
        s.push('\n');
        for e in &self.per_time {
            s.push_str(&format!(
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                e.t,
                e.weight,
                e.numerator,
                e.denominator,
                (e.numerator / e.denominator).sqrt()
            ));
        }
        s
    }
}

/// Spatial quadrature points and weights.
struct Grid {
    coords: Array2<f64>,
    weights: Vec<f64>,
    edge: Vec<bool>,
}

fn cartesian_grid(n: usize, spec: &QuadratureSpec) -> Result<Grid> {
    let q = gauss_legendre(spec.spatial_order, -spec.box_half_width, spec.box_half_width)?;
    let m = q.nodes.len();
    let total = m.pow(n as u32);
    let mut coords = Array2::zeros((total, n));
    let mut weights = vec![1.0; total];
    let mut edge = vec![false; total];
    for p in 0..total {
        let mut k = p;
        for c in 0..n {
            let i = k % m;
            k /= m;
            coords[[p, c]] = q.nodes[i];
            weights[p] *= q.weights[i];
            edge[p] |= i == 0 || i == m - 1;
        }
    }
    Ok(Grid { coords, weights, edge })
}

fn spherical_grid(spec: &QuadratureSpec) -> Result<Grid> {
    let rq = gauss_legendre(spec.radial_order, 0.0, spec.radial_cutoff)?;
    let cq = gauss_legendre(spec.polar_order, -1.0, 1.0)?;
    let np = spec.azimuthal_points;
    let mut pts = Vec::new();
    let mut weights = Vec::new();
    let mut edge = Vec::new();
    for (ir, (r, wr)) in rq.iter().enumerate() {
        for (c, wc) in cq.iter() {
            let s = (1.0 - c * c).sqrt();
            for k in 0..np {
                let phi = 2.0 * PI * k as f64 / np as f64;
                pts.extend([r * s * phi.cos(), r * s * phi.sin(), r * c]);
                weights.push(wr * r * r * wc * 2.0 * PI / np as f64);
                edge.push(ir == rq.nodes.len() - 1);
            }
        }
    }
    let n = weights.len();
    Ok(Grid {
        coords: Array2::from_shape_vec((n, 3), pts).unwrap(),
        weights,
        edge,
    })
}

/// Relative space-time L2 error of `pred` against `reference` over
/// `[0, horizon]`:
/// `sqrt( int int |a psi - psi_ref|^2 / int int |psi_ref|^2 )`, with the
/// complex constant `a` fitted once at `t = 0`.
pub fn rel_l2_error(
    pred: &dyn Evaluable,
    reference: &AnalyticState,
    horizon: f64,
    spec: &QuadratureSpec,
) -> Result<ErrorReport> {
    let n = reference.n_coords();
    if pred.n_coords() != n {
        return Err(invalid(format!(
            "prediction has {} coordinates, reference {n}",
            pred.n_coords()
        )));
    }
    let grid = match (reference.dimension(), n) {
        (1, 1..=3) => cartesian_grid(n, spec)?,
        (3, 3) => spherical_grid(spec)?,
        _ => {
            return Err(invalid(format!(
                "quadrature error needs at most three one-dimensional coordinates or one 3D electron, got {n}"
            )))
        }
    };
    if !(horizon > 0.0) {
        return Err(invalid("error horizon must be positive"));
    }
    let tq = gauss_legendre(spec.time_order, 0.0, horizon)?;
    let eval_at = |t: f64| -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        let times = vec![t; grid.weights.len()];
        Ok((pred.psi(&grid.coords, &times)?, Evaluable::psi(reference, &grid.coords, &times)?))
    };

    let (p0, r0) = eval_at(0.0)?;
    let mut pp = 0.0;
    let mut pr = Complex64::new(0.0, 0.0);
    let mut max_in: f64 = 0.0;
    let mut max_edge: f64 = 0.0;
    for ((p, r), (w, e)) in p0.iter().zip(&r0).zip(grid.weights.iter().zip(&grid.edge)) {
        pp += w * p.norm_sqr();
        pr += w * p.conj() * r;
        if *e {
            max_edge = max_edge.max(r.norm_sqr());
        } else {
            max_in = max_in.max(r.norm_sqr());
        }
    }
    if !(pp > 0.0) {
        return Err(invalid("prediction vanishes on the quadrature grid at t = 0"));
    }
    let a = pr / pp;
    let edge_ratio = max_edge / max_in;

    let per_time: Vec<Result<SliceError>> = tq
        .nodes
        .par_iter()
        .zip(tq.weights.par_iter())
        .map(|(&t, &wt)| {
            let (p, r) = eval_at(t)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for ((pi, ri), w) in p.iter().zip(&r).zip(&grid.weights) {
                num += w * (a * pi - ri).norm_sqr();
                den += w * ri.norm_sqr();
            }
            Ok(SliceError {
                t,
                weight: wt,
                numerator: num,
                denominator: den,
            })
        })
        .collect();
    let per_time = per_time.into_iter().collect::<Result<Vec<_>>>()?;
    let num: f64 = per_time.iter().map(|e| e.weight * e.numerator).sum();
    let den: f64 = per_time.iter().map(|e| e.weight * e.denominator).sum();
    let warning = (edge_ratio > 1e-8).then(|| {
        format!("reference density on the domain edge is {edge_ratio:.2e} of its peak; enlarge the domain")
    });
    Ok(ErrorReport {
        rel_l2: (num / den).sqrt(),
        per_time,
        alignment: (a.re, a.im),
        edge_density_ratio: edge_ratio,
        warning,
        quadrature: spec.clone(),
    })
}
