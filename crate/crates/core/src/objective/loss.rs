use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hamiltonian::HamiltonianKind;
use crate::autodiff::{
    build_wave, collect_gradient, log_abs_values, register_params, CVar, Ctx, JetMode, ParamGradient, Var,
    WaveProgram, NODE_LOG_ABS_THRESHOLD,
};
use crate::error::{invalid, Error, Result};
use crate::oracles::AnalyticState;

/// Default winsorization width: residual densities above
/// `median + WINSOR_MADS * MAD` of their slice are clipped to that cap.
pub const WINSOR_MADS: f64 = 5.0;

/// Relative weights of the loss terms: residual, initial condition, and the
/// value / time-derivative / gradient continuity penalties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_r: f64,
    pub lambda_i: f64,
    pub lambda_pv: f64,
    pub lambda_pt: f64,
    pub lambda_ps: f64,
}

impl LossWeights {
    /// Residual plus a strongly weighted initial condition.
    pub fn first_interval() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_i: 10.0,
            lambda_pv: 0.0,
            lambda_pt: 0.0,
            lambda_ps: 0.0,
        }
    }

    /// Residual plus the three boundary penalties.
    pub fn continuation() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_i: 0.0,
            lambda_pv: 1.0,
            lambda_pt: 1.0,
            lambda_ps: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_r, self.lambda_i, self.lambda_pv, self.lambda_pt, self.lambda_ps];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid(format!("loss weights must be finite and nonnegative, got {all:?}")));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(invalid("at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// Walkers sampled from `|psi(., t)|^2` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSlice {
    pub t: f64,
    pub coords: Array2<f64>,
    /// `log|psi|` under the parameters the walkers were drawn from. When
    /// present, the residual loss reweights to the current parameters.
    pub log_abs_ref: Option<Vec<f64>>,
}

impl TimeSlice {
    pub fn new(t: f64, coords: Array2<f64>) -> Self {
        Self {
            t,
            coords,
            log_abs_ref: None,
        }
    }
}

/// Initial points with the target values `psi_0(r)` at each.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialBatch {
    pub coords: Array2<f64>,
    pub targets: Vec<Complex64>,
}

impl InitialBatch {
    pub fn from_state(coords: Array2<f64>, state: &AnalyticState) -> Self {
        let targets = coords.rows().into_iter().map(|r| state.eval(&r.to_vec(), 0.0)).collect();
        Self { coords, targets }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub slices: Vec<TimeSlice>,
    pub initial: Option<InitialBatch>,
    /// Winsorization width in MADs; `None` keeps every residual as is.
    pub winsor_mads: Option<f64>,
}

impl SampleBatch {
    pub fn new(slices: Vec<TimeSlice>, initial: Option<InitialBatch>) -> Self {
        Self {
            slices,
            initial,
            winsor_mads: Some(WINSOR_MADS),
        }
    }


    pub fn n_residual_points(&self) -> usize {
        self.slices.iter().map(|s| s.coords.nrows()).sum()
    }

    /// Records `log|psi|` under `params` so that later evaluations at other
    /// parameters are self-normalized importance-sampling estimates.
    pub fn freeze(&mut self, program: &dyn WaveProgram, params: &[f64]) -> Result<()> {
        let refs: Vec<Result<Vec<f64>>> = self
            .slices
            .par_iter()
            .map(|s| log_abs_values(program, params, &s.coords, &vec![s.t; s.coords.nrows()]))
            .collect();
        for (s, r) in self.slices.iter_mut().zip(refs) {
            s.log_abs_ref = Some(r?);
        }
        Ok(())
    }
}

/// Value, time derivative and spatial gradient of the previous interval's
/// network at its end time, on a fixed set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryBatch {
    pub t: f64,
    pub coords: Array2<f64>,
    pub psi: Vec<Complex64>,
    pub dpsi_dt: Vec<Complex64>,
    /// `grad_psi[k][b]` is `d psi / d r_k` at point `b`.
    pub grad_psi: Vec<Vec<Complex64>>,
}

impl BoundaryBatch {
    pub fn from_network(program: &dyn WaveProgram, params: &[f64], coords: Array2<f64>, t: f64) -> Result<Self> {
        let mut ctx = Ctx::new(JetMode::first_order(program.n_coords()));
        let vars = register_params(&mut ctx, &program.param_shapes(), params)?;
        let w = build_wave(&mut ctx, program, &vars, &coords, &vec![t; coords.nrows()])?;
        let dt = w.dpsi_dt(&mut ctx).expect("time derivative requested");
        let dr = w.dpsi_dr(&mut ctx);
        Ok(Self {
            t,
            psi: w.psi.values(&ctx),
            dpsi_dt: dt.values(&ctx),
            grad_psi: dr.iter().map(|g| g.values(&ctx)).collect(),
            coords,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub value: f64,
    pub time: f64,
    pub space: f64,
}

/// How the residual term's parameter gradient is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMode {
    None,
    /// Score-weighted residual with per-slice baseline plus the pathwise
    /// term, for walkers drawn at the current parameters.
    Estimator,
    /// Gradient of the self-normalized reweighted loss. Equals the
    /// estimator when evaluated at the sampling parameters.
    Surrogate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub residual: f64,
    pub initial: Option<f64>,
    pub penalties: Option<Penalties>,
    pub gradient: Option<ParamGradient>,
}

/// `median + k * MAD` of a slice of residual densities; infinite when the
/// MAD vanishes.
pub fn winsor_cap(values: &[f64], k: f64) -> f64 {
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    let mad = median(&dev);
    if mad > 0.0 {
        med + k * mad
    } else {
        f64::INFINITY
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn col(values: impl IntoIterator<Item = f64>) -> Array2<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    let n = v.len();
    Array2::from_shape_vec((n, 1), v).unwrap()
}

fn finish(ctx: Ctx, out: Var, shapes: &[(usize, usize)], vars: &[Var], grad: bool) -> Result<(f64, Option<ParamGradient>)> {
    let value = ctx.graph.value(out)[[0, 0]];
    if !grad {
        return Ok((value, None));
    }
    let g = ctx.graph.backward(out);
    Ok((value, Some(collect_gradient(&g, shapes, vars)?)))
}

fn residual_slice(
    program: &dyn WaveProgram,
    params: &[f64],
    slice: &TimeSlice,
    h: &HamiltonianKind,
    winsor: Option<f64>,
    mode: GradientMode,
) -> Result<(f64, Option<ParamGradient>)> {
    let b = slice.coords.nrows();
    let shapes = program.param_shapes();
    let mut ctx = Ctx::new(JetMode::full(program.n_coords()));
    let vars = register_params(&mut ctx, &shapes, params)?;
    let w = build_wave(&mut ctx, program, &vars, &slice.coords, &vec![slice.t; b])?;
    let lop = w.lap_over_psi.expect("laplacian requested");
    let dt = w.dt_log.expect("time derivative requested");
    let v: Vec<f64> = slice.coords.rows().into_iter().map(|r| h.potential(&r.to_vec(), slice.t)).collect();
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(invalid(format!("potential is singular at walker {i} of slice t={}", slice.t)));
    }
    let kp = h.kinetic_prefactor();
    let g = &mut ctx.graph;
    // i d_t log psi - E_L, split into real and imaginary parts
    let vc = g.constant(col(v));
    let a = g.neg(dt.im);
    let k_re = g.scale(lop.re, kp);
    let zr = g.add(a, k_re);
    let zr = g.sub(zr, vc);
    let k_im = g.scale(lop.im, kp);
    let zi = g.add(dt.re, k_im);
    let zr2 = g.square(zr);
    let zi2 = g.square(zi);
    let mut rho = g.add(zr2, zi2);

    let la: Vec<f64> = g.value(w.log_abs).iter().copied().collect();
    let rv: Vec<f64> = g.value(rho).iter().copied().collect();
    for (&l, &r) in la.iter().zip(&rv) {
        if !(l.is_finite() && l >= NODE_LOG_ABS_THRESHOLD && r.is_finite()) {
            return Err(Error::NodeProximity { log_abs: l });
        }
    }
    let cap = winsor.map_or(f64::INFINITY, |k| winsor_cap(&rv, k));
    let clipped: Vec<f64> = rv.iter().map(|&r| r.min(cap)).collect();
    if rv.iter().any(|&r| r > cap) {
        let mask = g.constant(col(rv.iter().map(|&r| if r > cap { 0.0 } else { 1.0 })));
        let fill = g.constant(col(rv.iter().map(|&r| if r > cap { cap } else { 0.0 })));
        let kept = g.mul(rho, mask);
        rho = g.add(kept, fill);
    }

    let out = match mode {
        GradientMode::Estimator => {
            if b < 2 {
                return Err(invalid(format!("slice t={} has {b} points; the baseline needs at least 2", slice.t)));
            }
            let mean = clipped.iter().sum::<f64>() / b as f64;
            let seed = g.constant(col(clipped.iter().map(|r| 2.0 * (r - mean) / b as f64)));
            let score = g.mul(w.log_abs, seed);
            let score = g.sum_all(score);
            let path = g.sum_all(rho);
            let path = g.scale(path, 1.0 / b as f64);
            let s = g.add(score, path);
            // report the plain mean as the value
            let shift = mean - g.value(s)[[0, 0]];
            g.add_scalar(s, shift)
        }
        GradientMode::None | GradientMode::Surrogate => {
            let d = match &slice.log_abs_ref {
                None => {
                    let frozen = g.detach(w.log_abs);
                    g.sub(w.log_abs, frozen)
                }
                Some(r) => {
                    let rc = g.constant(col(r.iter().copied()));
                    g.sub(w.log_abs, rc)
                }
            };
            let d = g.scale(d, 2.0);
            let m = g.value(d).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let d = g.add_scalar(d, -m);
            let e = g.exp(d);
            let num = g.mul(e, rho);
            let num = g.sum_all(num);
            let den = g.sum_all(e);
            g.div(num, den)
        }
    };
    let value = ctx.graph.value(out)[[0, 0]];
    if !value.is_finite() {
        return Err(Error::NodeProximity { log_abs: f64::NAN });
    }
    finish(ctx, out, &shapes, &vars, mode != GradientMode::None)
}

fn check_slices(batch: &SampleBatch, program: &dyn WaveProgram) -> Result<()> {
    if batch.slices.is_empty() || batch.slices.iter().any(|s| s.coords.nrows() == 0) {
        return Err(invalid("residual batch has an empty slice or no slices"));
    }
    if let Some(s) = batch.slices.iter().find(|s| s.coords.ncols() != program.n_coords()) {
        return Err(invalid(format!(
            "slice t={} has {} coordinates, program expects {}",
            s.t,
            s.coords.ncols(),
            program.n_coords()
        )));
    }
    Ok(())
}

fn residual_terms(
    program: &dyn WaveProgram,
    params: &[f64],
    batch: &SampleBatch,
    h: &HamiltonianKind,
    mode: GradientMode,
) -> Result<(f64, Option<ParamGradient>)> {
    check_slices(batch, program)?;
    let parts: Vec<Result<(f64, Option<ParamGradient>)>> = batch
        .slices
        .par_iter()
        .map(|s| residual_slice(program, params, s, h, batch.winsor_mads, mode))
        .collect();
    let scale = 1.0 / batch.slices.len() as f64;
    let mut value = 0.0;
    let mut grad = (mode != GradientMode::None).then(|| vec![0.0; program.n_params()]);
    for p in parts {
        let (v, g) = p?;
        value += scale * v;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            for (a, x) in acc.iter_mut().zip(g.0) {
                *a += scale * x;
            }
        }
    }
    Ok((value, grad.map(ParamGradient)))
}

/// Mean residual density per slice, averaged over slices, after
/// winsorization. Slices carrying reference amplitudes are reweighted to
/// `params`.
pub fn residual_loss(program: &dyn WaveProgram, params: &[f64], batch: &SampleBatch, h: &HamiltonianKind) -> Result<f64> {
    Ok(residual_terms(program, params, batch, h, GradientMode::None)?.0)
}

/// Unbiased gradient of the residual loss for walkers drawn from the
/// current `|psi|^2`: score-weighted residual minus its per-slice baseline,
/// plus the pathwise residual gradient.
pub fn residual_grad(
    program: &dyn WaveProgram,
    params: &[f64],
    batch: &SampleBatch,
    h: &HamiltonianKind,
) -> Result<ParamGradient> {
    Ok(residual_terms(program, params, batch, h, GradientMode::Estimator)?.1.unwrap())
}

/// Residual loss and the gradient of its reweighted form.
pub fn residual_loss_grad(
    program: &dyn WaveProgram,
    params: &[f64],
    batch: &SampleBatch,
    h: &HamiltonianKind,
) -> Result<(f64, ParamGradient)> {
    let (v, g) = residual_terms(program, params, batch, h, GradientMode::Surrogate)?;
    Ok((v, g.unwrap()))
}

fn initial_terms(program: &dyn WaveProgram, params: &[f64], init: &InitialBatch, grad: bool) -> Result<(f64, Option<ParamGradient>)> {
    let b = init.coords.nrows();
    if b == 0 || init.targets.len() != b {
        return Err(invalid("initial batch is empty or its targets do not match its points"));
    }
    let shapes = program.param_shapes();
    let mut ctx = Ctx::new(JetMode::value_only());
    let vars = register_params(&mut ctx, &shapes, params)?;
    let w = build_wave(&mut ctx, program, &vars, &init.coords, &vec![0.0; b])?;
    let g = &mut ctx.graph;
    let tr = g.constant(col(init.targets.iter().map(|z| z.re)));
    let ti = g.constant(col(init.targets.iter().map(|z| z.im)));
    let out = sq_dev(g, w.psi, tr, ti);
    let out = g.sum_all(out);
    let out = g.scale(out, 1.0 / b as f64);
    finish(ctx, out, &shapes, &vars, grad)
}

fn sq_dev(g: &mut crate::autodiff::Graph, z: CVar, re: Var, im: Var) -> Var {
    let dr = g.sub(z.re, re);
    let di = g.sub(z.im, im);
    let a = g.square(dr);
    let b = g.square(di);
    g.add(a, b)
}

/// Mean of `|psi(r, 0) - psi_0(r)|^2` over the initial points.
pub fn initial_loss(program: &dyn WaveProgram, params: &[f64], init: &InitialBatch) -> Result<f64> {
    Ok(initial_terms(program, params, init, false)?.0)
}

pub fn initial_loss_grad(program: &dyn WaveProgram, params: &[f64], init: &InitialBatch) -> Result<(f64, ParamGradient)> {
    let (v, g) = initial_terms(program, params, init, true)?;
    Ok((v, g.unwrap()))
}

fn penalty_terms(
    program: &dyn WaveProgram,
    params: &[f64],
    bd: &BoundaryBatch,
    weights: Option<&LossWeights>,
) -> Result<(Penalties, Option<ParamGradient>)> {
    let b = bd.coords.nrows();
    if b == 0 {
        return Err(invalid("boundary batch is empty"));
    }
    let shapes = program.param_shapes();
    let mut ctx = Ctx::new(JetMode::first_order(program.n_coords()));
    let vars = register_params(&mut ctx, &shapes, params)?;
    let w = build_wave(&mut ctx, program, &vars, &bd.coords, &vec![bd.t; b])?;
    let dt = w.dpsi_dt(&mut ctx).expect("time derivative requested");
    let dr = w.dpsi_dr(&mut ctx);
    let g = &mut ctx.graph;
    let inv = 1.0 / b as f64;
    let term = |g: &mut crate::autodiff::Graph, z: CVar, target: &[Complex64]| {
        let re = g.constant(col(target.iter().map(|z| z.re)));
        let im = g.constant(col(target.iter().map(|z| z.im)));
        let d = sq_dev(g, z, re, im);
        let s = g.sum_all(d);
        g.scale(s, inv)
    };
    let pv = term(g, w.psi, &bd.psi);
    let pt = term(g, dt, &bd.dpsi_dt);
    let mut ps = g.zeros(1, 1);
    for (z, target) in dr.iter().zip(&bd.grad_psi) {
        let t = term(g, *z, target);
        ps = g.add(ps, t);
    }
    let pen = Penalties {
        value: g.value(pv)[[0, 0]],
        time: g.value(pt)[[0, 0]],
        space: g.value(ps)[[0, 0]],
    };
    let Some(wt) = weights else {
        return Ok((pen, None));
    };
    let a = g.scale(pv, wt.lambda_pv);
    let bq = g.scale(pt, wt.lambda_pt);
    let c = g.scale(ps, wt.lambda_ps);
    let s = g.add(a, bq);
    let out = g.add(s, c);
    let (_, grad) = finish(ctx, out, &shapes, &vars, true)?;
    Ok((pen, grad))
}

/// Mean squared deviations of `psi`, `d_t psi` and `grad psi` from the
/// previous network's values on the boundary batch.
pub fn continuity_penalties(program: &dyn WaveProgram, params: &[f64], bd: &BoundaryBatch) -> Result<Penalties> {
    Ok(penalty_terms(program, params, bd, None)?.0)
}

/// Penalties and the gradient of their weighted sum.
pub fn continuity_grad(
    program: &dyn WaveProgram,
    params: &[f64],
    bd: &BoundaryBatch,
    weights: &LossWeights,
) -> Result<(Penalties, ParamGradient)> {
    let (p, g) = penalty_terms(program, params, bd, Some(weights))?;
    Ok((p, g.unwrap()))
}

/// Weighted total of every available loss term, with its gradient unless
/// `mode` is [`GradientMode::None`].
pub fn total_loss(
    program: &dyn WaveProgram,
    params: &[f64],
    h: &HamiltonianKind,
    weights: &LossWeights,
    batch: &SampleBatch,
    boundary: Option<&BoundaryBatch>,
    mode: GradientMode,
) -> Result<LossReport> {
    weights.validate()?;
    let want = mode != GradientMode::None;
    let (residual, rg) = residual_terms(program, params, batch, h, mode)?;
    let mut total = weights.lambda_r * residual;
    let mut grad = rg.map(|g| g.0.iter().map(|x| weights.lambda_r * x).collect::<Vec<f64>>());

    let initial = match &batch.initial {
        Some(init) => {
            let (v, g) = initial_terms(program, params, init, want && weights.lambda_i > 0.0)?;
            total += weights.lambda_i * v;
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                for (a, x) in acc.iter_mut().zip(g.0) {
                    *a += weights.lambda_i * x;
                }
            }
            Some(v)
        }
        None => None,
    };
    let penalties = match boundary {
        Some(bd) => {
            let (p, g) = penalty_terms(program, params, bd, want.then_some(weights))?;
            total += weights.lambda_pv * p.value + weights.lambda_pt * p.time + weights.lambda_ps * p.space;
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                for (a, x) in acc.iter_mut().zip(g.0) {
                    *a += x;
                }
            }
            Some(p)
        }
        None => None,
    };
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            step: 0,
            detail: format!("residual {residual}, initial {initial:?}, penalties {penalties:?}"),
        });
    }
    Ok(LossReport {
        total,
        residual,
        initial,
        penalties,
        gradient: grad.map(ParamGradient),
    })
}
