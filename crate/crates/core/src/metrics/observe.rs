use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Evaluable;
use crate::error::{invalid, Result};
use crate::sampler::{mix_seed, sample_conditional, SamplerConfig, TimeDensity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `sum_i |r_i|^2`.
    Monopole,
    /// `-sum_i x_i`.
    Dipole,
    /// `<psi(0)|psi(t)> / <psi(0)|psi(0)>`.
    Overlap,
}

impl Observable {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "monopole" => Ok(Self::Monopole),
            "dipole" => Ok(Self::Dipole),
            "overlap" => Ok(Self::Overlap),
            _ => Err(invalid(format!("unknown observable {s:?}; expected monopole, dipole or overlap"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservablePoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    /// Imaginary part and its error; zero for real observables.
    pub imag: f64,
    pub imag_stderr: f64,
}

impl ObservablePoint {
    pub fn phase(&self) -> f64 {
        self.imag.atan2(self.value)
    }
}

pub const OBSERVABLE_CSV_HEADER: &str = "time,value,stderr,imag,imag_stderr";

pub fn observable_csv(points: &[ObservablePoint]) -> String {
    let mut s = String::from(OBSERVABLE_CSV_HEADER);
    s.push('\n');
    for p in points {
        s.push_str(&format!(
            "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            p.t, p.value, p.stderr, p.imag, p.imag_stderr
        ));
    }
    s
}

const N_BATCHES: usize = 20;

/// Mean and batched-means standard error.
fn batched_mean(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let nb = N_BATCHES.min(n);
    if nb < 2 {
        return (mean, f64::NAN);
    }
    let size = n / nb;
    let means: Vec<f64> = (0..nb)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mb = means.iter().sum::<f64>() / nb as f64;
    let var = means.iter().map(|m| (m - mb).powi(2)).sum::<f64>() / (nb - 1) as f64;
    (mean, (var / nb as f64).sqrt())
}

/// Monte Carlo estimate of `observable` at each time.
///
/// Monopole and dipole sample `|psi(., t)|^2` at every `t`. The overlap
/// samples `|psi(., 0)|^2` once and averages `psi(r, t) / psi(r, 0)`.
/// `dimension` is the number of spatial coordinates per particle.
#[allow(clippy::too_many_arguments)]
pub fn mc_observable(
    density: &dyn TimeDensity,
    state: &dyn Evaluable,
    anchors: &[Vec<f64>],
    dimension: usize,
    observable: Observable,
    times: &[f64],
    n_samples: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<Vec<ObservablePoint>> {
    if n_samples < N_BATCHES {
        return Err(invalid(format!("need at least {N_BATCHES} samples per time")));
    }
    let mut out = Vec::with_capacity(times.len());
    match observable {
        Observable::Monopole | Observable::Dipole => {
            for (k, &t) in times.iter().enumerate() {
                let (x, _) = sample_conditional(density, anchors, t, n_samples, cfg.burn_in, mix_seed(seed, 7, k as u64), cfg)?;
                let vals: Vec<f64> = x
                    .rows()
                    .into_iter()
                    .map(|r| match observable {
                        Observable::Monopole => r.iter().map(|v| v * v).sum(),
                        _ => -r.iter().step_by(dimension).sum::<f64>(),
                    })
                    .collect();
                let (value, stderr) = batched_mean(&vals);
                out.push(ObservablePoint {
                    t,
                    value,
                    stderr,
                    imag: 0.0,
                    imag_stderr: 0.0,
                });
            }
        }
        Observable::Overlap => {
            let (x, _) = sample_conditional(density, anchors, 0.0, n_samples, cfg.burn_in, mix_seed(seed, 8, 0), cfg)?;
            let base = state.psi(&x, &vec![0.0; n_samples])?;
            for &t in times {
                let now = state.psi(&x, &vec![t; n_samples])?;
                let ratio: Vec<Complex64> = now.iter().zip(&base).map(|(a, b)| a / b).collect();
                let (value, stderr) = batched_mean(&ratio.iter().map(|z| z.re).collect::<Vec<_>>());
                let (imag, imag_stderr) = batched_mean(&ratio.iter().map(|z| z.im).collect::<Vec<_>>());
                out.push(ObservablePoint {
                    t,
                    value,
                    stderr,
                    imag,
                    imag_stderr,
                });
            }
        }
    }
    Ok(out)
}

