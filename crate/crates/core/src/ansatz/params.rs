use ndarray::{ArrayView2, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spec::SystemSpec;
use crate::error::{invalid, Result};

/// One named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Canonical ordering of the trainable tensors.
///
/// For `l` in `0..L`: `layer{l}.V`, `layer{l}.b`, and for `l < L-1` also
/// `layer{l}.W`, `layer{l}.c` (the last layer's pair update is never read).
/// Then `orbital.up.w`, `orbital.up.g`, `orbital.down.w`, `orbital.down.g`
/// (empty channels omitted), `envelope.pi0`, `envelope.sigma0`,
/// `envelope.gen_w1`, `envelope.gen_b1`, `envelope.gen_w2`, `phase.w1`,
/// `phase.b1`, `phase.w2`, `phase.b2`, `det_weights`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub tensors: Vec<TensorInfo>,
}

impl ParamLayout {
    pub fn for_spec(spec: &SystemSpec) -> Self {
        let mut shapes: Vec<(String, usize, usize)> = Vec::new();
        let (w1, w2) = (spec.width_1e, spec.width_2e);
        let (in1, in2) = (spec.input_1e(), spec.input_2e());
        for l in 0..spec.layers {
            let (h1, h2) = if l == 0 { (in1, in2) } else { (w1, w2) };
            shapes.push((format!("layer{l}.V"), 3 * h1 + 2 * h2, w1));
            shapes.push((format!("layer{l}.b"), 1, w1));
            if l + 1 < spec.layers {
                shapes.push((format!("layer{l}.W"), h2, w2));
                shapes.push((format!("layer{l}.c"), 1, w2));
            }
        }
        let k = spec.n_determinants;
        for (alpha, name) in ["up", "down"].iter().enumerate() {
            let n = spec.channels()[alpha];
            if n > 0 {
                shapes.push((format!("orbital.{name}.w"), w1, k * n));
                shapes.push((format!("orbital.{name}.g"), 1, k * n));
            }
        }
        let (n_pi, n_sigma) = envelope_counts(spec);
        let he = spec.envelope_hidden;
        shapes.push(("envelope.pi0".into(), 1, n_pi));
        shapes.push(("envelope.sigma0".into(), 1, n_sigma));
        shapes.push(("envelope.gen_w1".into(), 1, he));
        shapes.push(("envelope.gen_b1".into(), 1, he));
        shapes.push(("envelope.gen_w2".into(), he, n_pi + n_sigma));
        let hp = spec.phase_hidden;
        let n_out = k * spec.max_orbitals();
        shapes.push(("phase.w1".into(), w1 + 1, hp));
        shapes.push(("phase.b1".into(), 1, hp));
        shapes.push(("phase.w2".into(), hp, n_out));
        shapes.push(("phase.b2".into(), 1, n_out));
        shapes.push(("det_weights".into(), k, 1));

        let mut offset = 0;
        let tensors = shapes
            .into_iter()
            .map(|(name, rows, cols)| {
                let t = TensorInfo {
                    name,
                    rows,
                    cols,
                    offset,
                };
                offset += rows * cols;
                t
            })
            .collect();
        Self { tensors }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors.iter().map(|t| (t.rows, t.cols)).collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(TensorInfo::len).sum()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Name and in-tensor `(row, col)` of flat index `i`.
    pub fn locate(&self, i: usize) -> Option<(&str, usize, usize)> {
        let t = self
            .tensors
            .iter()
            .find(|t| i >= t.offset && i < t.offset + t.len())?;
        let j = i - t.offset;
        Some((&t.name, j / t.cols, j % t.cols))
    }
}

/// Number of `pi` and `Sigma` entries: one weight and one `d x d` matrix per
/// (channel, determinant, orbital, anchor).
pub fn envelope_counts(spec: &SystemSpec) -> (usize, usize) {
    let n_pi = spec.n_determinants * spec.n_electrons() * spec.n_anchors();
    (n_pi, n_pi * spec.d() * spec.d())
}

/// Column of `pi_{iI}^{k alpha}` in the generator output.
pub fn pi_column(spec: &SystemSpec, alpha: usize, k: usize, i: usize, anchor: usize) -> usize {
    let na = spec.n_anchors();
    let before = spec.n_determinants * spec.channel_start(alpha) * na;
    before + (k * spec.channels()[alpha] + i) * na + anchor
}

/// Column of `Sigma_{iI}^{k alpha}[a, b]` within the `Sigma` block.
pub fn sigma_column(
    spec: &SystemSpec,
    alpha: usize,
    k: usize,
    i: usize,
    anchor: usize,
    a: usize,
    b: usize,
) -> usize {
    let d = spec.d();
    (pi_column(spec, alpha, k, i, anchor) * d + a) * d + b
}

/// Flat parameter vector with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl NetworkParams {
    pub fn from_vec(layout: ParamLayout, data: Vec<f64>) -> Result<Self> {
        if layout.n_params() != data.len() {
            return Err(invalid(format!(
                "layout holds {} parameters, vector has {}",
                layout.n_params(),
                data.len()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> ArrayView2<'_, f64> {
        let t = self
            .layout
            .get(name)
            .unwrap_or_else(|| panic!("no parameter tensor named {name}"));
        ArrayView2::from_shape((t.rows, t.cols), &self.data[t.offset..t.offset + t.len()]).unwrap()
    }

    pub fn tensor_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        let t = self
            .layout
            .get(name)
            .unwrap_or_else(|| panic!("no parameter tensor named {name}"))
            .clone();
        ArrayViewMut2::from_shape((t.rows, t.cols), &mut self.data[t.offset..t.offset + t.len()])
            .unwrap()
    }

    pub fn has(&self, name: &str) -> bool {
        self.layout.get(name).is_some()
    }
}

/// Deterministic initialization.
///
/// Layer weights are `N(0, 1/fan_in)` with zero biases, orbital offsets `g`
/// start at 1 with small projections, envelopes start at `pi = 1`,
/// `Sigma = I` with a zero generator head, the phase head is small and the
/// determinant weights are `1/K`.
pub fn init_params(spec: &SystemSpec, seed: u64) -> Result<NetworkParams> {
    spec.validate()?;
    let layout = ParamLayout::for_spec(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; layout.n_params()];
    let d = spec.d();
    for t in &layout.tensors {
        let out = &mut data[t.offset..t.offset + t.len()];
        let leaf = t.name.rsplit('.').next().unwrap_or(&t.name);
        let mut normal = |std: f64, out: &mut [f64]| {
            for x in out.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = std * z;
            }
        };
        match (t.name.as_str(), leaf) {
            (_, "V") | (_, "W") => normal(1.0 / (t.rows as f64).sqrt(), out),
            (n, "w") if n.starts_with("orbital") => normal(0.3 / (t.rows as f64).sqrt(), out),
            (n, "g") if n.starts_with("orbital") => out.fill(1.0),
            ("envelope.pi0", _) => out.fill(1.0),
            ("envelope.sigma0", _) => {
                for (c, x) in out.iter_mut().enumerate() {
                    let a = (c / d) % d;
                    let b = c % d;
                    *x = if a == b { 1.0 } else { 0.0 };
                }
            }
            ("envelope.gen_w1", _) => normal(1.0, out),
            ("phase.w1", _) => normal(1.0 / (t.rows as f64).sqrt(), out),
            ("phase.w2", _) => normal(0.01 / (t.rows as f64).sqrt(), out),
            ("det_weights", _) => out.fill(1.0 / spec.n_determinants as f64),
            _ => {}
        }
    }
    NetworkParams::from_vec(layout, data)
}
