//! The ansatz as a batched tape program.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use ndarray::Array2;

use super::params::{envelope_counts, pi_column, sigma_column, ParamLayout};
use super::spec::SystemSpec;
use crate::autodiff::{ComplexJet, Ctx, Jet, RowMix, Var, WaveOutput, WaveProgram};
use crate::error::Result;

/// Batched FASTNet evaluation. Determinants are expanded over permutations
/// in linear domain, which is exact and cheap for spin blocks up to a few
/// electrons.
#[derive(Clone, Debug)]
pub struct FastNet {
    spec: SystemSpec,
    layout: ParamLayout,
    /// `(permutation, sign)` for each channel size.
    perms: [Vec<(Vec<usize>, f64)>; 2],
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for k in 0..rest.len() {
            let x = rest.remove(k);
            prefix.push(x);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(k, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out.into_iter()
        .map(|p| {
            let mut inv = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if p[i] > p[j] {
                        inv += 1;
                    }
                }
            }
            (p, if inv % 2 == 0 { 1.0 } else { -1.0 })
        })
        .collect()
}

impl FastNet {
    pub fn new(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec: spec.clone(),
            layout: ParamLayout::for_spec(spec),
            perms: [permutations(spec.n_up), permutations(spec.n_down)],
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn param(&self, params: &[Var], name: &str) -> Var {
        params[self.layout.position(name).unwrap_or_else(|| panic!("missing tensor {name}"))]
    }

    fn has(&self, name: &str) -> bool {
        self.layout.position(name).is_some()
    }
}

fn idx(v: Vec<usize>) -> Arc<Vec<usize>> {
    Arc::new(v)
}

/// Euclidean norm of each row; in one dimension `sqrt(x^2 + 1)`, whose
/// second derivative stays finite at `x = 0`.
fn distance(ctx: &mut Ctx, a: &Jet, d: usize) -> Jet {
    if d > 1 {
        return ctx.row_norm(a);
    }
    let sq = ctx.square(a);
    let s = ctx.add_scalar(&sq, 1.0);
    ctx.sqrt(&s)
}

/// `(tanh(x) + skip) / sqrt(2)`, or plain `tanh(x)` without a skip.
fn res_lin(ctx: &mut Ctx, pre: &Jet, skip: Option<&Jet>) -> Jet {
    let a = ctx.tanh(pre);
    match skip {
        Some(s) => {
            let sum = ctx.add(&a, s);
            ctx.scale(&sum, FRAC_1_SQRT_2)
        }
        None => a,
    }
}

impl WaveProgram for FastNet {
    fn n_coords(&self) -> usize {
        self.spec.n_coords()
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.layout.shapes()
    }

    fn build(&self, ctx: &mut Ctx, params: &[Var], coords: &Jet, time: &Jet) -> WaveOutput {
        let spec = &self.spec;
        let (b, _) = ctx.shape(coords);
        let n = spec.n_electrons();
        let d = spec.d();
        let kdet = spec.n_determinants;

        // electron rows (b, i) -> b*n + i
        let x = ctx.reshape(coords, b * n, d);
        let t_e = ctx.gather_rows(time, &idx((0..b * n).map(|r| r / n).collect()));

        let mut parts = Vec::new();
        for pos in spec.anchors() {
            let shift = ctx
                .graph
                .constant(Array2::from_shape_vec((1, d), pos.iter().map(|v| -v).collect()).unwrap());
            let diff = ctx.add_bias(&x, shift);
            let nrm = distance(ctx, &diff, d);
            parts.push(diff);
            parts.push(nrm);
            parts.push(t_e.clone());
        }
        let refs: Vec<&Jet> = parts.iter().collect();
        let mut h1 = ctx.concat_cols(&refs);

        // pair rows (b, i, j) -> (b*n + i)*n + j
        let rows_i = idx((0..b * n * n).map(|r| r / n).collect());
        let rows_j = idx((0..b * n * n).map(|r| (r / (n * n)) * n + r % n).collect());
        let xi = ctx.gather_rows(&x, &rows_i);
        let xj = ctx.gather_rows(&x, &rows_j);
        let dij = ctx.sub(&xi, &xj);
        let nij = distance(ctx, &dij, d);
        let t_p = ctx.gather_rows(time, &idx((0..b * n * n).map(|r| r / (n * n)).collect()));
        let mut h2 = ctx.concat_cols(&[&dij, &nij, &t_p]);

        let mut mean1 = Vec::new();
        let mut mean2 = Vec::new();
        for alpha in 0..2 {
            let members = spec.channels()[alpha];
            let start = spec.channel_start(alpha);
            let w = 1.0 / members.max(1) as f64;
            let m1 = (0..b * n)
                .map(|r| {
                    let base = (r / n) * n;
                    (start..start + members).map(|j| (base + j, w)).collect()
                })
                .collect();
            mean1.push(Arc::new(RowMix {
                in_rows: b * n,
                rows: m1,
            }));
            let m2 = (0..b * n)
                .map(|r| (start..start + members).map(|j| (r * n + j, w)).collect())
                .collect();
            mean2.push(Arc::new(RowMix {
                in_rows: b * n * n,
                rows: m2,
            }));
        }

        for l in 0..spec.layers {
            let g1u = ctx.row_mix(&h1, &mean1[0]);
            let g1d = ctx.row_mix(&h1, &mean1[1]);
            let g2u = ctx.row_mix(&h2, &mean2[0]);
            let g2d = ctx.row_mix(&h2, &mean2[1]);
            let f = ctx.concat_cols(&[&h1, &g1u, &g1d, &g2u, &g2d]);
            let v = self.param(params, &format!("layer{l}.V"));
            let bias = self.param(params, &format!("layer{l}.b"));
            let pre = ctx.affine(&f, v, bias);
            let same = ctx.shape(&h1).1 == spec.width_1e;
            let new_h1 = res_lin(ctx, &pre, same.then_some(&h1));
            if self.has(&format!("layer{l}.W")) {
                let w = self.param(params, &format!("layer{l}.W"));
                let c = self.param(params, &format!("layer{l}.c"));
                let pre2 = ctx.affine(&h2, w, c);
                let same2 = ctx.shape(&h2).1 == spec.width_2e;
                h2 = res_lin(ctx, &pre2, same2.then_some(&h2));
            }
            h1 = new_h1;
        }

        // time-dependent envelope coefficients, one row per walker
        let (n_pi, n_sigma) = envelope_counts(spec);
        let gw1 = self.param(params, "envelope.gen_w1");
        let gb1 = self.param(params, "envelope.gen_b1");
        let gw2 = self.param(params, "envelope.gen_w2");
        let pre = ctx.affine(time, gw1, gb1);
        let hidden = ctx.tanh(&pre);
        let gen = ctx.matmul(&hidden, gw2);
        let pi_all = ctx.gather_cols(&gen, &idx((0..n_pi).collect()));
        let pi0 = self.param(params, "envelope.pi0");
        let pi_all = ctx.add_bias(&pi_all, pi0);
        let sig_all = ctx.gather_cols(&gen, &idx((n_pi..n_pi + n_sigma).collect()));
        let s0 = self.param(params, "envelope.sigma0");
        let sig_all = ctx.add_bias(&sig_all, s0);

        // phase network on (h_final, t)
        let pin = ctx.concat_cols(&[&h1, &t_e]);
        let pw1 = self.param(params, "phase.w1");
        let pb1 = self.param(params, "phase.b1");
        let pw2 = self.param(params, "phase.w2");
        let pb2 = self.param(params, "phase.b2");
        let ph = ctx.affine(&pin, pw1, pb1);
        let ph = ctx.tanh(&ph);
        let phase = ctx.affine(&ph, pw2, pb2);

        let anchors = spec.anchors();
        let p = spec.envelope_exponent;
        let mut dets: Vec<ComplexJet> = Vec::new();
        for alpha in 0..2 {
            let na = spec.channels()[alpha];
            if na == 0 {
                continue;
            }
            let start = spec.channel_start(alpha);
            let ncol = kdet * na;
            let rows = idx((0..b * na).map(|r| (r / na) * n + start + r % na).collect());
            let walker = idx((0..b * na).map(|r| r / na).collect());
            let name = if alpha == 0 { "up" } else { "down" };
            let ha = ctx.gather_rows(&h1, &rows);
            let ow = self.param(params, &format!("orbital.{name}.w"));
            let og = self.param(params, &format!("orbital.{name}.g"));
            let base = ctx.affine(&ha, ow, og);

            let xa = ctx.gather_rows(&x, &rows);
            let pi_rows = ctx.gather_rows(&pi_all, &walker);
            let sig_rows = ctx.gather_rows(&sig_all, &walker);
            // sums over the inner index of Sigma and over the d components
            let mut sum_inner = Array2::zeros((ncol * d * d, ncol * d));
            for c in 0..ncol * d * d {
                sum_inner[[c, c / d]] = 1.0;
            }
            let sum_inner = ctx.graph.constant(sum_inner);
            let mut sum_outer = Array2::zeros((ncol * d, ncol));
            for c in 0..ncol * d {
                sum_outer[[c, c / d]] = 1.0;
            }
            let sum_outer = ctx.graph.constant(sum_outer);
            let rep = idx((0..ncol * d * d).map(|c| c % d).collect());
            let mut env: Option<Jet> = None;
            for (anchor, pos) in anchors.iter().enumerate() {
                let shift = ctx
                    .graph
                    .constant(Array2::from_shape_vec((1, d), pos.iter().map(|v| -v).collect()).unwrap());
                let diff = ctx.add_bias(&xa, shift);
                let diff_rep = ctx.gather_cols(&diff, &rep);
                let mut sig_cols = Vec::with_capacity(ncol * d * d);
                let mut pi_cols = Vec::with_capacity(ncol);
                for k in 0..kdet {
                    for i in 0..na {
                        pi_cols.push(pi_column(spec, alpha, k, i, anchor));
                        for a in 0..d {
                            for bb in 0..d {
                                sig_cols.push(sigma_column(spec, alpha, k, i, anchor, a, bb));
                            }
                        }
                    }
                }
                let sig = ctx.gather_cols(&sig_rows, &idx(sig_cols));
                let prod = ctx.mul(&sig, &diff_rep);
                let u = ctx.matmul(&prod, sum_inner);
                let u2 = ctx.square(&u);
                let q = ctx.matmul(&u2, sum_outer);
                let qp = ctx.pow(&q, 0.5 * p);
                let neg = ctx.neg(&qp);
                let e = ctx.exp(&neg);
                let pi = ctx.gather_cols(&pi_rows, &idx(pi_cols));
                let term = ctx.mul(&pi, &e);
                env = Some(match env {
                    Some(acc) => ctx.add(&acc, &term),
                    None => term,
                });
            }
            let amp = ctx.mul(&base, &env.expect("at least one anchor"));

            let nmax = spec.max_orbitals();
            let s_cols = idx((0..ncol).map(|c| (c / na) * nmax + c % na).collect());
            let s_rows = ctx.gather_rows(&phase, &rows);
            let s = ctx.gather_cols(&s_rows, &s_cols);
            let rot = ctx.cis(&s);
            let phi = ctx.cscale(&amp, &rot);

            // walker-major layout: column j*K*na + k*na + i
            let re = ctx.reshape(&phi.re, b, na * ncol);
            let im = ctx.reshape(&phi.im, b, na * ncol);
            // each term multiplies in orbital order, so exchanging two
            // electrons maps terms onto each other bit for bit
            let perms = &self.perms[alpha];
            let mut prod: Option<ComplexJet> = None;
            for i in 0..na {
                let cols: Vec<usize> = (0..kdet)
                    .flat_map(|k| perms.iter().map(move |(pm, _)| pm[i] * ncol + k * na + i))
                    .collect();
                let cols = idx(cols);
                let f = ComplexJet {
                    re: ctx.gather_cols(&re, &cols),
                    im: ctx.gather_cols(&im, &cols),
                };
                prod = Some(match prod {
                    Some(acc) => ctx.cmul(&acc, &f),
                    None => f,
                });
            }
            let prod = prod.unwrap();
            let np = perms.len();
            let mut signs = Array2::zeros((kdet * np, kdet));
            for k in 0..kdet {
                for (q, (_, sgn)) in perms.iter().enumerate() {
                    signs[[k * np + q, k]] = *sgn;
                }
            }
            let signs = ctx.graph.constant(signs);
            dets.push(ComplexJet {
                re: ctx.matmul_symmetric(&prod.re, signs),
                im: ctx.matmul_symmetric(&prod.im, signs),
            });
        }
        let mut total = dets[0].clone();
        for dd in &dets[1..] {
            total = ctx.cmul(&total, dd);
        }
        let omega = self.param(params, "det_weights");
        WaveOutput::Psi(ComplexJet {
            re: ctx.matmul(&total.re, omega),
            im: ctx.matmul(&total.im, omega),
        })
    }
}
