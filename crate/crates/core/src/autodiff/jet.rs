//! Forward propagation of spatial gradient, Laplacian and time derivative
//! on top of the reverse tape.
//!
//! A [`Jet`] carries a value together with its derivatives with respect to
//! the `n_tangents` spatial input coordinates and the time input. Missing
//! components (`None`) are identically zero. Every component is a tape node,
//! so derivative quantities remain differentiable with respect to
//! parameters.

use std::sync::Arc;

use ndarray::Array2;

use super::tape::{Graph, RowMix, Unary, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JetMode {
    pub n_tangents: usize,
    pub laplacian: bool,
    pub time: bool,
}

impl JetMode {
    pub fn value_only() -> Self {
        Self {
            n_tangents: 0,
            laplacian: false,
            time: false,
        }
    }

    pub fn full(n_tangents: usize) -> Self {
        Self {
            n_tangents,
            laplacian: true,
            time: true,
        }
    }

    /// First derivatives in space and time, no Laplacian.
    pub fn first_order(n_tangents: usize) -> Self {
        Self {
            n_tangents,
            laplacian: false,
            time: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Jet {
    pub v: Var,
    pub g: Vec<Option<Var>>,
    pub lap: Option<Var>,
    pub dt: Option<Var>,
}

/// Graph plus the derivative mode in which jets are propagated.
pub struct Ctx {
    pub graph: Graph,
    pub mode: JetMode,
}

fn opt_add(g: &mut Graph, a: Option<Var>, b: Option<Var>) -> Option<Var> {
    match (a, b) {
        (Some(x), Some(y)) => Some(g.add(x, y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

impl Ctx {
    pub fn new(mode: JetMode) -> Self {
        Self {
            graph: Graph::new(),
            mode,
        }
    }

    pub fn shape(&self, j: &Jet) -> (usize, usize) {
        self.graph.shape(j.v)
    }

    /// Jet of a quantity that does not depend on the inputs.
    pub fn lift(&self, v: Var) -> Jet {
        Jet {
            v,
            g: vec![None; self.mode.n_tangents],
            lap: None,
            dt: None,
        }
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Jet {
        let v = self.graph.constant(value);
        self.lift(v)
    }

    pub fn filled(&mut self, rows: usize, cols: usize, x: f64) -> Jet {
        let v = self.graph.filled(rows, cols, x);
        self.lift(v)
    }

    /// Coordinate input: tangent `c` is the unit vector on column `c`.
    pub fn coords(&mut self, coords: &Array2<f64>) -> Jet {
        let (rows, cols) = coords.dim();
        let v = self.graph.constant(coords.clone());
        let n = self.mode.n_tangents;
        assert!(n == 0 || n == cols, "tangent count {n} != coordinate count {cols}");
        let g = (0..n)
            .map(|c| {
                let mut e = Array2::zeros((rows, cols));
                e.column_mut(c).fill(1.0);
                Some(self.graph.constant(e))
            })
            .collect();
        Jet {
            v,
            g,
            lap: None,
            dt: None,
        }
    }

    /// Time input (one column): unit time derivative.
    pub fn time(&mut self, times: &[f64]) -> Jet {
        let v = self
            .graph
            .constant(Array2::from_shape_vec((times.len(), 1), times.to_vec()).unwrap());
        let dt = self
            .mode
            .time
            .then(|| self.graph.filled(times.len(), 1, 1.0));
        Jet {
            v,
            g: vec![None; self.mode.n_tangents],
            lap: None,
            dt,
        }
    }

    /// Applies the same linear map to every component.
    pub fn linear(&mut self, a: &Jet, mut f: impl FnMut(&mut Graph, Var) -> Var) -> Jet {
        let v = f(&mut self.graph, a.v);
        let g = a.g.iter().map(|c| c.map(|x| f(&mut self.graph, x))).collect();
        let lap = a.lap.map(|x| f(&mut self.graph, x));
        let dt = a.dt.map(|x| f(&mut self.graph, x));
        Jet { v, g, lap, dt }
    }

    pub fn matmul(&mut self, a: &Jet, w: Var) -> Jet {
        self.linear(a, |g, x| g.matmul(x, w))
    }

    pub fn matmul_symmetric(&mut self, a: &Jet, w: Var) -> Jet {
        self.linear(a, |g, x| g.matmul_symmetric(x, w))
    }

    pub fn add_bias(&mut self, a: &Jet, bias: Var) -> Jet {
        let mut out = a.clone();
        out.v = self.graph.add_bias(a.v, bias);
        out
    }

    pub fn affine(&mut self, a: &Jet, w: Var, bias: Var) -> Jet {
        let m = self.matmul(a, w);
        self.add_bias(&m, bias)
    }

    pub fn scale(&mut self, a: &Jet, s: f64) -> Jet {
        self.linear(a, |g, x| g.scale(x, s))
    }

    pub fn add_scalar(&mut self, a: &Jet, s: f64) -> Jet {
        let mut out = a.clone();
        out.v = self.graph.add_scalar(a.v, s);
        out
    }

    pub fn gather_rows(&mut self, a: &Jet, idx: &Arc<Vec<usize>>) -> Jet {
        self.linear(a, |g, x| g.gather_rows(x, idx.clone()))
    }

    pub fn row_mix(&mut self, a: &Jet, mix: &Arc<RowMix>) -> Jet {
        self.linear(a, |g, x| g.row_mix(x, mix.clone()))
    }

    pub fn gather_cols(&mut self, a: &Jet, idx: &Arc<Vec<usize>>) -> Jet {
        self.linear(a, |g, x| g.gather_cols(x, idx.clone()))
    }

    pub fn sum_cols(&mut self, a: &Jet) -> Jet {
        self.linear(a, |g, x| g.sum_cols(x))
    }

    pub fn reshape(&mut self, a: &Jet, rows: usize, cols: usize) -> Jet {
        self.linear(a, |g, x| g.reshape(x, rows, cols))
    }

    pub fn concat_cols(&mut self, parts: &[&Jet]) -> Jet {
        let pick = |ctx: &mut Ctx, f: &dyn Fn(&Jet) -> Option<Var>| -> Option<Var> {
            if parts.iter().all(|p| f(p).is_none()) {
                return None;
            }
            let vars: Vec<Var> = parts
                .iter()
                .map(|p| {
                    f(p).unwrap_or_else(|| {
                        let (r, c) = ctx.graph.shape(p.v);
                        ctx.graph.zeros(r, c)
                    })
                })
                .collect();
            Some(ctx.graph.concat_cols(&vars))
        };
        let values: Vec<Var> = parts.iter().map(|p| p.v).collect();
        let v = self.graph.concat_cols(&values);
        let g = (0..self.mode.n_tangents)
            .map(|k| pick(self, &|p: &Jet| p.g[k]))
            .collect();
        let lap = pick(self, &|p: &Jet| p.lap);
        let dt = pick(self, &|p: &Jet| p.dt);
        Jet { v, g, lap, dt }
    }

    pub fn add(&mut self, a: &Jet, b: &Jet) -> Jet {
        let gr = &mut self.graph;
        let v = gr.add(a.v, b.v);
        let g = a.g.iter().zip(&b.g).map(|(x, y)| opt_add(gr, *x, *y)).collect();
        let lap = opt_add(gr, a.lap, b.lap);
        let dt = opt_add(gr, a.dt, b.dt);
        Jet { v, g, lap, dt }
    }

    pub fn neg(&mut self, a: &Jet) -> Jet {
        self.scale(a, -1.0)
    }

    pub fn sub(&mut self, a: &Jet, b: &Jet) -> Jet {
        let nb = self.neg(b);
        self.add(a, &nb)
    }

    /// `sum` of a list of jets of equal shape.
    pub fn sum(&mut self, items: &[Jet]) -> Jet {
        let mut acc = items[0].clone();
        for it in &items[1..] {
            acc = self.add(&acc, it);
        }
        acc
    }

    fn product_rule(
        &mut self,
        a: &Jet,
        b: &Jet,
        mul: &dyn Fn(&mut Graph, Var, Var) -> Var,
    ) -> Jet {
        let mode = self.mode;
        let gr = &mut self.graph;
        let v = mul(gr, a.v, b.v);
        let mut cross: Option<Var> = None;
        let mut g = Vec::with_capacity(mode.n_tangents);
        for k in 0..mode.n_tangents {
            let t1 = a.g[k].map(|ga| mul(gr, ga, b.v));
            let t2 = b.g[k].map(|gb| mul(gr, a.v, gb));
            g.push(opt_add(gr, t1, t2));
            if mode.laplacian {
                if let (Some(ga), Some(gb)) = (a.g[k], b.g[k]) {
                    let p = mul(gr, ga, gb);
                    cross = opt_add(gr, cross, Some(p));
                }
            }
        }
        let lap = if mode.laplacian {
            let t1 = a.lap.map(|la| mul(gr, la, b.v));
            let t2 = b.lap.map(|lb| mul(gr, a.v, lb));
            let t3 = cross.map(|c| gr.scale(c, 2.0));
            let s = opt_add(gr, t1, t2);
            opt_add(gr, s, t3)
        } else {
            None
        };
        let dt = if mode.time {
            let t1 = a.dt.map(|da| mul(gr, da, b.v));
            let t2 = b.dt.map(|db| mul(gr, a.v, db));
            opt_add(gr, t1, t2)
        } else {
            None
        };
        Jet { v, g, lap, dt }
    }

    pub fn mul(&mut self, a: &Jet, b: &Jet) -> Jet {
        self.product_rule(a, b, &|g, x, y| g.mul(x, y))
    }

    /// `a (r x c) * b (r x 1)` broadcast over columns.
    pub fn mul_col(&mut self, a: &Jet, b: &Jet) -> Jet {
        self.product_rule(a, b, &|g, x, y| g.mul_col(x, y))
    }

    pub fn div(&mut self, a: &Jet, b: &Jet) -> Jet {
        let r = self.recip(b);
        self.mul(a, &r)
    }

    /// Chain rule for `f(a)` given `f'(a)` and `f''(a)` as tape nodes.
    fn chain(&mut self, a: &Jet, y: Var, d1: Var, d2: Option<Var>) -> Jet {
        let mode = self.mode;
        let gr = &mut self.graph;
        let g: Vec<Option<Var>> = a.g.iter().map(|c| c.map(|x| gr.mul(d1, x))).collect();
        let lap = if mode.laplacian {
            let mut sq: Option<Var> = None;
            for x in a.g.iter().flatten() {
                let s = gr.square(*x);
                sq = opt_add(gr, sq, Some(s));
            }
            let t1 = a.lap.map(|l| gr.mul(d1, l));
            let t2 = match (sq, d2) {
                (Some(s), Some(d2)) => Some(gr.mul(d2, s)),
                _ => None,
            };
            opt_add(gr, t1, t2)
        } else {
            None
        };
        let dt = a.dt.map(|x| gr.mul(d1, x));
        Jet { v: y, g, lap, dt }
    }

    fn has_tangents(&self, a: &Jet) -> bool {
        a.g.iter().any(|x| x.is_some()) || a.lap.is_some() || a.dt.is_some()
    }

    fn needs_second(&self, a: &Jet) -> bool {
        self.mode.laplacian && a.g.iter().any(|x| x.is_some())
    }

    pub fn tanh(&mut self, a: &Jet) -> Jet {
        let y = self.graph.tanh(a.v);
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        let gr = &mut self.graph;
        let y2 = gr.square(y);
        let neg = gr.neg(y2);
        let d1 = gr.add_scalar(neg, 1.0);
        let d2 = if self.needs_second(a) {
            let gr = &mut self.graph;
            let p = gr.mul(y, d1);
            Some(gr.scale(p, -2.0))
        } else {
            None
        };
        self.chain(a, y, d1, d2)
    }

    pub fn exp(&mut self, a: &Jet) -> Jet {
        let y = self.graph.exp(a.v);
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        self.chain(a, y, y, Some(y))
    }

    pub fn ln(&mut self, a: &Jet) -> Jet {
        let y = self.graph.ln(a.v);
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        let d1 = self.graph.recip(a.v);
        let d2 = if self.needs_second(a) {
            let s = self.graph.square(d1);
            Some(self.graph.neg(s))
        } else {
            None
        };
        self.chain(a, y, d1, d2)
    }

    pub fn sin(&mut self, a: &Jet) -> Jet {
        let y = self.graph.sin(a.v);
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        let d1 = self.graph.cos(a.v);
        let d2 = self.needs_second(a).then(|| self.graph.neg(y));
        self.chain(a, y, d1, d2)
    }

    pub fn cos(&mut self, a: &Jet) -> Jet {
        let y = self.graph.cos(a.v);
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        let s = self.graph.sin(a.v);
        let d1 = self.graph.neg(s);
        let d2 = self.needs_second(a).then(|| self.graph.neg(y));
        self.chain(a, y, d1, d2)
    }

    pub fn recip(&mut self, a: &Jet) -> Jet {
        let y = self.graph.recip(a.v);
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        let y2 = self.graph.square(y);
        let d1 = self.graph.neg(y2);
        let d2 = if self.needs_second(a) {
            let y3 = self.graph.mul(y2, y);
            Some(self.graph.scale(y3, 2.0))
        } else {
            None
        };
        self.chain(a, y, d1, d2)
    }

    pub fn square(&mut self, a: &Jet) -> Jet {
        self.mul(a, a)
    }

    /// `a^p` for nonnegative `a`; derivatives vanish where `a == 0`.
    pub fn pow(&mut self, a: &Jet, p: f64) -> Jet {
        if p == 1.0 {
            return a.clone();
        }
        if p == 2.0 {
            return self.square(a);
        }
        let y = self.graph.unary(a.v, Unary::SafePow(p));
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        let pm1 = self.graph.unary(a.v, Unary::SafePow(p - 1.0));
        let d1 = self.graph.scale(pm1, p);
        let d2 = if self.needs_second(a) {
            let pm2 = self.graph.unary(a.v, Unary::SafePow(p - 2.0));
            Some(self.graph.scale(pm2, p * (p - 1.0)))
        } else {
            None
        };
        self.chain(a, y, d1, d2)
    }

    /// Square root with zero derivatives at the origin.
    pub fn sqrt(&mut self, a: &Jet) -> Jet {
        let y = self.graph.unary(a.v, Unary::SafeSqrt);
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        let inv = self.graph.unary(a.v, Unary::SafePow(-0.5));
        let d1 = self.graph.scale(inv, 0.5);
        let d2 = if self.needs_second(a) {
            let p = self.graph.unary(a.v, Unary::SafePow(-1.5));
            Some(self.graph.scale(p, -0.25))
        } else {
            None
        };
        self.chain(a, y, d1, d2)
    }

    pub fn atan(&mut self, a: &Jet) -> Jet {
        let y = self.graph.unary(a.v, Unary::Atan);
        if !self.has_tangents(a) {
            return self.lift(y);
        }
        let x2 = self.graph.square(a.v);
        let den = self.graph.add_scalar(x2, 1.0);
        let d1 = self.graph.recip(den);
        let d2 = if self.needs_second(a) {
            let d1sq = self.graph.square(d1);
            let p = self.graph.mul(a.v, d1sq);
            Some(self.graph.scale(p, -2.0))
        } else {
            None
        };
        self.chain(a, y, d1, d2)
    }

    /// Euclidean norm across the columns of each row.
    pub fn row_norm(&mut self, a: &Jet) -> Jet {
        let sq = self.square(a);
        let s = self.sum_cols(&sq);
        self.sqrt(&s)
    }
}

/// Complex-valued jet as a (real, imaginary) pair.
#[derive(Clone, Debug)]
pub struct ComplexJet {
    pub re: Jet,
    pub im: Jet,
}

impl Ctx {
    pub fn complex_real(&mut self, re: Jet) -> ComplexJet {
        let (r, c) = self.shape(&re);
        let im = self.filled(r, c, 0.0);
        ComplexJet { re, im }
    }

    pub fn cadd(&mut self, a: &ComplexJet, b: &ComplexJet) -> ComplexJet {
        ComplexJet {
            re: self.add(&a.re, &b.re),
            im: self.add(&a.im, &b.im),
        }
    }

    pub fn cmul(&mut self, a: &ComplexJet, b: &ComplexJet) -> ComplexJet {
        let rr = self.mul(&a.re, &b.re);
        let ii = self.mul(&a.im, &b.im);
        let ri = self.mul(&a.re, &b.im);
        let ir = self.mul(&a.im, &b.re);
        ComplexJet {
            re: self.sub(&rr, &ii),
            im: self.add(&ri, &ir),
        }
    }

    /// Real jet times a complex jet.
    pub fn cscale(&mut self, a: &Jet, b: &ComplexJet) -> ComplexJet {
        ComplexJet {
            re: self.mul(a, &b.re),
            im: self.mul(a, &b.im),
        }
    }

    /// `exp(i * phase)`.
    pub fn cis(&mut self, phase: &Jet) -> ComplexJet {
        ComplexJet {
            re: self.cos(phase),
            im: self.sin(phase),
        }
    }

    /// `exp(z)`.
    pub fn cexp(&mut self, z: &ComplexJet) -> ComplexJet {
        let m = self.exp(&z.re);
        let c = self.cis(&z.im);
        self.cscale(&m, &c)
    }
}
