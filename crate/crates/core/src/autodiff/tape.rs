//! Reverse-mode tape over dense row-major matrices.
//!
//! Every node holds its forward value. Rows index batch items (walkers,
//! electrons, pairs), columns index features. Parameter gradients are read
//! back from leaf nodes after [`Graph::backward`].

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Tanh,
    Exp,
    Ln,
    Sin,
    Cos,
    /// Square root whose derivative is taken as zero at the origin.
    SafeSqrt,
    /// `x^p` for `x >= 0`, derivative taken as zero at the origin.
    SafePow(f64),
    Recip,
    Square,
    Atan,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::SafeSqrt => x.sqrt(),
            Unary::SafePow(p) => {
                if x == 0.0 {
                    0.0
                } else {
                    x.powf(p)
                }
            }
            Unary::Recip => 1.0 / x,
            Unary::Square => x * x,
            Unary::Atan => x.atan(),
        }
    }

    /// First derivative given input `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Exp => y,
            Unary::Ln => 1.0 / x,
            Unary::Sin => x.cos(),
            Unary::Cos => -x.sin(),
            Unary::SafeSqrt => {
                if x > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            Unary::SafePow(p) => {
                if x > 0.0 {
                    p * x.powf(p - 1.0)
                } else {
                    0.0
                }
            }
            Unary::Recip => -y * y,
            Unary::Square => 2.0 * x,
            Unary::Atan => 1.0 / (1.0 + x * x),
        }
    }
}

/// Sum whose result does not depend on the order of `terms`, and which
/// negates exactly when every term is negated.
pub(crate) fn symmetric_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(|a, b| a.abs().total_cmp(&b.abs()));
    let pos: f64 = terms.iter().filter(|x| **x > 0.0).sum();
    let neg: f64 = terms.iter().filter(|x| **x < 0.0).sum();
    pos + neg
}

/// Sparse row combination: `out[r] = sum_(src, w) w * in[src]`.
#[derive(Debug)]
pub struct RowMix {
    pub in_rows: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Unary(Var, Unary),
    GatherRows(Var, Arc<Vec<usize>>),
    RowMix(Var, Arc<RowMix>),
    GatherCols(Var, Arc<Vec<usize>>),
    ConcatCols(Vec<Var>),
    SumCols(Var),
    SumRows(Var),
    Reshape(Var),
    /// `a (r x c) * b (r x 1)` broadcast over columns.
    MulCol(Var, Var),
    /// Gradient barrier.
    Detach,
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// A recording of one forward evaluation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Differentiable leaf (parameters).
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Detach)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Array2::zeros((rows, cols)))
    }

    pub fn filled(&mut self, rows: usize, cols: usize, x: f64) -> Var {
        self.constant(Array2::from_elem((rows, cols), x))
    }

    /// Copy of `a` through which no gradient flows.
    pub fn detach(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.constant(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ra, ca) = self.shape(a);
        let (rb, _) = self.shape(b);
        assert_eq!(ca, rb, "matmul shape mismatch {ra}x{ca} . {rb}x_");
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// [`matmul`](Self::matmul) with each output summed by [`symmetric_sum`],
    /// so permuting the inner index leaves the value bitwise unchanged.
    pub fn matmul_symmetric(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.ncols(), y.nrows(), "matmul shape mismatch");
        let mut v = Array2::zeros((x.nrows(), y.ncols()));
        let mut terms = Vec::with_capacity(x.ncols());
        for i in 0..x.nrows() {
            for j in 0..y.ncols() {
                terms.clear();
                terms.extend(x.row(i).iter().zip(y.column(j)).map(|(p, q)| p * q));
                v[[i, j]] = symmetric_sum(&mut terms);
            }
        }
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (_, c) = self.shape(a);
        assert_eq!(self.shape(bias), (1, c), "bias shape mismatch");
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let r = self.unary(b, Unary::Recip);
        self.mul(a, r)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) + s;
        self.push(v, Op::AddScalar(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Var {
        let v = self.value(a).mapv(|x| f.apply(x));
        self.push(v, Op::Unary(a, f))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Ln)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Sin)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Cos)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Square)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Recip)
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Var {
        let src = self.value(a);
        let cols = src.ncols();
        let mut out = Array2::zeros((idx.len(), cols));
        for (r, &s) in idx.iter().enumerate() {
            out.row_mut(r).assign(&src.row(s));
        }
        self.push(out, Op::GatherRows(a, idx))
    }

    pub fn row_mix(&mut self, a: Var, mix: Arc<RowMix>) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), mix.in_rows, "row_mix input rows mismatch");
        let cols = src.ncols();
        let mut out = Array2::zeros((mix.rows.len(), cols));
        let mut terms = Vec::new();
        for (r, entries) in mix.rows.iter().enumerate() {
            for c in 0..cols {
                terms.clear();
                terms.extend(entries.iter().map(|&(s, w)| w * src[[s, c]]));
                out[[r, c]] = symmetric_sum(&mut terms);
            }
        }
        self.push(out, Op::RowMix(a, mix))
    }

    pub fn gather_cols(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Var {
        let src = self.value(a);
        let out = src.select(Axis(1), &idx);
        self.push(out, Op::GatherCols(a, idx))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols row mismatch");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::SumCols(a))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let r = self.sum_rows(a);
        self.sum_cols(r)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.len(), rows * cols, "reshape size mismatch");
        let flat: Vec<f64> = src.iter().copied().collect();
        let out = Array2::from_shape_vec((rows, cols), flat).unwrap();
        self.push(out, Op::Reshape(a))
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (r, _) = self.shape(a);
        assert_eq!(self.shape(col), (r, 1), "mul_col needs an r x 1 column");
        let v = self.value(a) * self.value(col);
        self.push(v, Op::MulCol(a, col))
    }

    /// Reverse sweep from `output` seeded with `seed` (same shape).
    pub fn backward_with_seed(&self, output: Var, seed: Array2<f64>) -> Gradients {
        assert_eq!(seed.dim(), self.shape(output));
        let mut grads: Vec<Option<Array2<f64>>> = Vec::with_capacity(output.0 + 1);
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(seed);

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Detach => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBias(a, bias) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g * *s),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Unary(a, f) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .and(&node.value)
                        .for_each(|gv, &x, &y| *gv *= f.derivative(x, y));
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Array2::zeros((rows, cols));
                    for (r, &s) in idx.iter().enumerate() {
                        let mut dst = ga.row_mut(s);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowMix(a, mix) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Array2::zeros((rows, cols));
                    for (r, entries) in mix.rows.iter().enumerate() {
                        for &(s, w) in entries {
                            ga.row_mut(s).scaled_add(w, &g.row(r));
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherCols(a, idx) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Array2::zeros((rows, cols));
                    for (c, &s) in idx.iter().enumerate() {
                        let mut dst = ga.column_mut(s);
                        dst += &g.column(c);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let gp = g.slice(ndarray::s![.., start..start + w]).to_owned();
                        acc(&mut grads, p, gp);
                        start += w;
                    }
                }
                Op::SumCols(a) => {
                    let (rows, cols) = self.shape(*a);
                    let ga = Array2::from_shape_fn((rows, cols), |(r, _)| g[[r, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let ga = Array2::from_shape_fn((rows, cols), |(_, c)| g[[0, c]]);
                    acc(&mut grads, *a, ga);
                }
                Op::Reshape(a) => {
                    let (rows, cols) = self.shape(*a);
                    let flat: Vec<f64> = g.iter().copied().collect();
                    acc(&mut grads, *a, Array2::from_shape_vec((rows, cols), flat).unwrap());
                }
                Op::MulCol(a, col) => {
                    let ga = &g * self.value(*col);
                    let gc = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *col, gc);
                }
            }
        }
        Gradients { grads }
    }

    /// Reverse sweep from a 1x1 output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        self.backward_with_seed(output, Array2::from_elem((1, 1), 1.0))
    }
}

/// Adjoints of the leaves reached by a reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when `v` does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}
