//! Wavefunction programs and the quantities derived from them.

use ndarray::Array2;
use num_complex::Complex64;

use super::jet::{ComplexJet, Ctx, JetMode};
use super::tape::Var;
use crate::error::{Error, Result};

/// Walkers with `log|psi|` below this are treated as sitting on a node.
pub const NODE_LOG_ABS_THRESHOLD: f64 = -300.0;

/// What a program produces: the wavefunction itself or its logarithm.
pub enum WaveOutput {
    Psi(ComplexJet),
    LogPsi(ComplexJet),
}

/// A parameterized complex function of `(r, t)` built from jet primitives.
///
/// `coords` is a `B x n_coords` jet and `time` a `B x 1` jet. The output
/// must be `B x 1`.
pub trait WaveProgram: Send + Sync {
    fn n_coords(&self) -> usize;

    /// Shapes of the trainable tensors, in canonical order.
    fn param_shapes(&self) -> Vec<(usize, usize)>;

    fn build(&self, ctx: &mut Ctx, params: &[Var], coords: &super::Jet, time: &super::Jet)
        -> WaveOutput;

    fn n_params(&self) -> usize {
        self.param_shapes().iter().map(|(r, c)| r * c).sum()
    }
}

/// Registers a flat parameter vector as tape leaves, one per tensor.
pub fn register_params(ctx: &mut Ctx, shapes: &[(usize, usize)], flat: &[f64]) -> Result<Vec<Var>> {
    let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
    if total != flat.len() {
        return Err(Error::InvalidArgument(format!(
            "parameter vector has {} entries, program expects {total}",
            flat.len()
        )));
    }
    let mut start = 0;
    let mut vars = Vec::with_capacity(shapes.len());
    for &(r, c) in shapes {
        let a = Array2::from_shape_vec((r, c), flat[start..start + r * c].to_vec()).unwrap();
        vars.push(ctx.graph.leaf(a));
        start += r * c;
    }
    Ok(vars)
}

/// Flattens leaf adjoints into canonical order; unreached leaves give zeros.
pub fn collect_gradient(
    grads: &super::Gradients,
    shapes: &[(usize, usize)],
    vars: &[Var],
) -> Result<ParamGradient> {
    let mut out = Vec::with_capacity(shapes.iter().map(|(r, c)| r * c).sum());
    for (&(r, c), &v) in shapes.iter().zip(vars) {
        match grads.get(v) {
            Some(g) => out.extend(g.iter().copied()),
            None => out.extend(std::iter::repeat(0.0).take(r * c)),
        }
    }
    if let Some(index) = out.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    Ok(ParamGradient(out))
}

/// Gradient of a scalar objective with respect to every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient(pub Vec<f64>);

impl ParamGradient {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A complex `B x 1` quantity as a pair of tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

impl CVar {
    pub fn values(&self, ctx: &Ctx) -> Vec<Complex64> {
        let re = ctx.graph.value(self.re);
        let im = ctx.graph.value(self.im);
        re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }
}

fn scale_jet(ctx: &mut Ctx, z: ComplexJet, s: Var) -> ComplexJet {
    let g = &mut ctx.graph;
    let mut part = |j: super::Jet| super::Jet {
        v: g.mul(j.v, s),
        g: j.g.into_iter().map(|x| x.map(|x| g.mul(x, s))).collect(),
        lap: j.lap.map(|x| g.mul(x, s)),
        dt: j.dt.map(|x| g.mul(x, s)),
    };
    let re = part(z.re);
    let im = part(z.im);
    ComplexJet { re, im }
}

fn cmul(ctx: &mut Ctx, a: CVar, b: CVar) -> CVar {
    let g = &mut ctx.graph;
    let rr = g.mul(a.re, b.re);
    let ii = g.mul(a.im, b.im);
    let ri = g.mul(a.re, b.im);
    let ir = g.mul(a.im, b.re);
    CVar {
        re: g.sub(rr, ii),
        im: g.add(ri, ir),
    }
}

fn cadd(ctx: &mut Ctx, a: CVar, b: CVar) -> CVar {
    let g = &mut ctx.graph;
    CVar {
        re: g.add(a.re, b.re),
        im: g.add(a.im, b.im),
    }
}

fn csquare(ctx: &mut Ctx, a: CVar) -> CVar {
    cmul(ctx, a, a)
}

/// The wavefunction and its derivative quantities for a batch, all on tape.
///
/// Space and time derivatives are present according to the [`JetMode`] of
/// the context used to build it.
pub struct WaveEval {
    pub log_abs: Var,
    pub psi: CVar,
    pub grad_log: Vec<CVar>,
    pub dt_log: Option<CVar>,
    /// `Laplacian(psi) / psi`.
    pub lap_over_psi: Option<CVar>,
}

impl WaveEval {
    pub fn from_output(ctx: &mut Ctx, out: WaveOutput) -> Self {
        match out {
            WaveOutput::Psi(z) => Self::from_psi(ctx, z),
            WaveOutput::LogPsi(z) => Self::from_log(ctx, z),
        }
    }

    fn from_psi(ctx: &mut Ctx, z: ComplexJet) -> Self {
        let psi = CVar {
            re: z.re.v,
            im: z.im.v,
        };
        // per-walker power of two bringing |psi| near one; exact, and keeps
        // 1/|psi|^2 and its adjoints finite far out in the tails
        let exps: Vec<i32> = {
            let g = &ctx.graph;
            g.value(psi.re)
                .iter()
                .zip(g.value(psi.im).iter())
                .map(|(&a, &b)| {
                    let m = a.abs().max(b.abs());
                    if m.is_finite() && m > 0.0 {
                        m.log2().floor() as i32
                    } else {
                        0
                    }
                })
                .collect()
        };
        let rows = exps.len();
        let column = |f: &dyn Fn(i32) -> f64| Array2::from_shape_fn((rows, 1), |(r, _)| f(exps[r]));
        let scale = ctx.graph.constant(column(&|e| 2f64.powi(-e)));
        let shift = ctx.graph.constant(column(&|e| e as f64 * std::f64::consts::LN_2));
        let z = scale_jet(ctx, z, scale);
        let g = &mut ctx.graph;
        let sre2 = g.square(z.re.v);
        let sim2 = g.square(z.im.v);
        let mod2 = g.add(sre2, sim2);
        let inv = g.recip(mod2);
        let lnm = g.ln(mod2);
        let half = g.scale(lnm, 0.5);
        let log_abs = g.add(half, shift);
        let scaled = CVar {
            re: z.re.v,
            im: z.im.v,
        };
        // 1/psi = conj(psi) / |psi|^2
        let neg_im = g.neg(scaled.im);
        let inv_psi = CVar {
            re: g.mul(scaled.re, inv),
            im: g.mul(neg_im, inv),
        };
        let over = |ctx: &mut Ctx, re: Option<Var>, im: Option<Var>| -> Option<CVar> {
            if re.is_none() && im.is_none() {
                return None;
            }
            let g = &mut ctx.graph;
            let (r, c) = g.shape(psi.re);
            let re = re.unwrap_or_else(|| g.zeros(r, c));
            let im = im.unwrap_or_else(|| g.zeros(r, c));
            Some(cmul(ctx, CVar { re, im }, inv_psi))
        };
        let n = ctx.mode.n_tangents;
        let mut grad_log = Vec::with_capacity(n);
        for k in 0..n {
            let q = over(ctx, z.re.g[k], z.im.g[k]).unwrap_or_else(|| {
                let g = &mut ctx.graph;
                let (r, c) = g.shape(psi.re);
                CVar {
                    re: g.zeros(r, c),
                    im: g.zeros(r, c),
                }
            });
            grad_log.push(q);
        }
        let dt_log = if ctx.mode.time {
            Some(over(ctx, z.re.dt, z.im.dt).unwrap_or_else(|| zero_c(ctx, psi.re)))
        } else {
            None
        };
        let lap_over_psi = if ctx.mode.laplacian {
            Some(over(ctx, z.re.lap, z.im.lap).unwrap_or_else(|| zero_c(ctx, psi.re)))
        } else {
            None
        };
        Self {
            log_abs,
            psi,
            grad_log,
            dt_log,
            lap_over_psi,
        }
    }

    fn from_log(ctx: &mut Ctx, z: ComplexJet) -> Self {
        let log_abs = z.re.v;
        let g = &mut ctx.graph;
        let m = g.exp(z.re.v);
        let c = g.cos(z.im.v);
        let s = g.sin(z.im.v);
        let psi = CVar {
            re: g.mul(m, c),
            im: g.mul(m, s),
        };
        let pick = |ctx: &mut Ctx, re: Option<Var>, im: Option<Var>| -> CVar {
            let g = &mut ctx.graph;
            let (r, c) = g.shape(log_abs);
            CVar {
                re: re.unwrap_or_else(|| g.zeros(r, c)),
                im: im.unwrap_or_else(|| g.zeros(r, c)),
            }
        };
        let n = ctx.mode.n_tangents;
        let grad_log: Vec<CVar> = (0..n).map(|k| pick(ctx, z.re.g[k], z.im.g[k])).collect();
        let dt_log = ctx.mode.time.then(|| pick(ctx, z.re.dt, z.im.dt));
        let lap_over_psi = if ctx.mode.laplacian {
            let mut acc = pick(ctx, z.re.lap, z.im.lap);
            for gk in &grad_log {
                let sq = csquare(ctx, *gk);
                acc = cadd(ctx, acc, sq);
            }
            Some(acc)
        } else {
            None
        };
        Self {
            log_abs,
            psi,
            grad_log,
            dt_log,
            lap_over_psi,
        }
    }

    /// `d psi / dt`.
    pub fn dpsi_dt(&self, ctx: &mut Ctx) -> Option<CVar> {
        self.dt_log.map(|d| cmul(ctx, d, self.psi))
    }

    /// `d psi / d r_k` for every coordinate.
    pub fn dpsi_dr(&self, ctx: &mut Ctx) -> Vec<CVar> {
        self.grad_log.iter().map(|g| cmul(ctx, *g, self.psi)).collect()
    }

    /// `Laplacian(log psi) = Laplacian(psi)/psi - sum_k (d_k log psi)^2`.
    pub fn lap_log(&self, ctx: &mut Ctx) -> Option<CVar> {
        let mut acc = self.lap_over_psi?;
        for gk in &self.grad_log {
            let sq = csquare(ctx, *gk);
            let g = &mut ctx.graph;
            acc = CVar {
                re: g.sub(acc.re, sq.re),
                im: g.sub(acc.im, sq.im),
            };
        }
        Some(acc)
    }
}

fn zero_c(ctx: &mut Ctx, like: Var) -> CVar {
    let g = &mut ctx.graph;
    let (r, c) = g.shape(like);
    CVar {
        re: g.zeros(r, c),
        im: g.zeros(r, c),
    }
}

/// Builds the program on a batch inside an existing context.
pub fn build_wave(
    ctx: &mut Ctx,
    program: &dyn WaveProgram,
    params: &[Var],
    coords: &Array2<f64>,
    times: &[f64],
) -> Result<WaveEval> {
    if coords.ncols() != program.n_coords() {
        return Err(Error::InvalidArgument(format!(
            "program expects {} coordinates per walker, got {}",
            program.n_coords(),
            coords.ncols()
        )));
    }
    if coords.nrows() != times.len() {
        return Err(Error::InvalidArgument(format!(
            "{} walkers but {} times",
            coords.nrows(),
            times.len()
        )));
    }
    let x = ctx.coords(coords);
    let t = ctx.time(times);
    let out = program.build(ctx, params, &x, &t);
    Ok(WaveEval::from_output(ctx, out))
}

/// Value, first and second spatial derivatives and time derivative of
/// `log psi` at a single spacetime point.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBundle {
    pub log_psi: Complex64,
    pub grad_r: Vec<Complex64>,
    pub laplacian_log: Complex64,
    pub dlog_dt: Complex64,
    pub valid: bool,
}

impl DerivativeBundle {
    /// `Laplacian(psi)/psi`, the kinetic ingredient of the local energy.
    pub fn lap_over_psi(&self) -> Complex64 {
        self.laplacian_log + self.grad_r.iter().map(|g| g * g).sum::<Complex64>()
    }

    pub fn check(&self) -> Result<&Self> {
        if self.valid {
            Ok(self)
        } else {
            Err(Error::NodeProximity {
                log_abs: self.log_psi.re,
            })
        }
    }
}

/// Derivative bundles for every walker of a batch.
pub fn evaluate_bundles(
    program: &dyn WaveProgram,
    params: &[f64],
    coords: &Array2<f64>,
    times: &[f64],
) -> Result<Vec<DerivativeBundle>> {
    let mut ctx = Ctx::new(JetMode::full(program.n_coords()));
    let vars = register_params(&mut ctx, &program.param_shapes(), params)?;
    let w = build_wave(&mut ctx, program, &vars, coords, times)?;
    let lap_log = w.lap_log(&mut ctx).expect("laplacian requested");
    let log_abs = ctx.graph.value(w.log_abs).clone();
    let psi = w.psi.values(&ctx);
    let grads: Vec<Vec<Complex64>> = w.grad_log.iter().map(|g| g.values(&ctx)).collect();
    let lap = lap_log.values(&ctx);
    let dt = w.dt_log.expect("time requested").values(&ctx);
    Ok((0..coords.nrows())
        .map(|b| {
            let la = log_abs[[b, 0]];
            let grad_r: Vec<Complex64> = grads.iter().map(|g| g[b]).collect();
            let valid = la.is_finite()
                && la >= NODE_LOG_ABS_THRESHOLD
                && grad_r.iter().all(|g| g.is_finite())
                && lap[b].is_finite()
                && dt[b].is_finite();
            DerivativeBundle {
                log_psi: Complex64::new(la, psi[b].arg()),
                grad_r,
                laplacian_log: lap[b],
                dlog_dt: dt[b],
                valid,
            }
        })
        .collect())
}

/// Derivative bundle at one point `(r, t)`.
pub fn evaluate_bundle(
    program: &dyn WaveProgram,
    params: &[f64],
    r: &[f64],
    t: f64,
) -> Result<DerivativeBundle> {
    let coords = Array2::from_shape_vec((1, r.len()), r.to_vec()).unwrap();
    Ok(evaluate_bundles(program, params, &coords, &[t])?.remove(0))
}

/// `psi` values for a batch (no derivatives).
pub fn psi_values(
    program: &dyn WaveProgram,
    params: &[f64],
    coords: &Array2<f64>,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let mut ctx = Ctx::new(JetMode::value_only());
    let vars = register_params(&mut ctx, &program.param_shapes(), params)?;
    let w = build_wave(&mut ctx, program, &vars, coords, times)?;
    Ok(w.psi.values(&ctx))
}

/// `log|psi|` values for a batch (no derivatives).
pub fn log_abs_values(
    program: &dyn WaveProgram,
    params: &[f64],
    coords: &Array2<f64>,
    times: &[f64],
) -> Result<Vec<f64>> {
    let mut ctx = Ctx::new(JetMode::value_only());
    let vars = register_params(&mut ctx, &program.param_shapes(), params)?;
    let w = build_wave(&mut ctx, program, &vars, coords, times)?;
    Ok(ctx.graph.value(w.log_abs).iter().copied().collect())
}

/// Gradient of a scalar objective built by `objective` on a fresh tape.
///
/// The closure receives the context and the registered parameter leaves and
/// returns a `1 x 1` node. Returns the objective value and its gradient.
pub fn grad_params<F>(
    shapes: &[(usize, usize)],
    params: &[f64],
    mode: JetMode,
    objective: F,
) -> Result<(f64, ParamGradient)>
where
    F: FnOnce(&mut Ctx, &[Var]) -> Result<Var>,
{
    let mut ctx = Ctx::new(mode);
    let vars = register_params(&mut ctx, shapes, params)?;
    let out = objective(&mut ctx, &vars)?;
    let value = ctx.graph.value(out)[[0, 0]];
    let grads = ctx.graph.backward(out);
    let g = collect_gradient(&grads, shapes, &vars)?;
    Ok((value, g))
}
