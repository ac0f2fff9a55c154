use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::objective::HamiltonianKind;

/// Physical problem plus network sizes.
///
/// Nuclei and spatial dimension come from the Hamiltonian. When there are
/// no nuclei a single virtual anchor at the origin feeds the one-electron
/// stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n_up: usize,
    pub n_down: usize,
    pub hamiltonian: HamiltonianKind,
    /// Envelope decay exponent `p`.
    pub envelope_exponent: f64,
    pub layers: usize,
    pub width_1e: usize,
    pub width_2e: usize,
    pub n_determinants: usize,
    #[serde(default = "default_phase_hidden")]
    pub phase_hidden: usize,
    #[serde(default = "default_envelope_hidden")]
    pub envelope_hidden: usize,
}

fn default_phase_hidden() -> usize {
    16
}

fn default_envelope_hidden() -> usize {
    8
}

impl SystemSpec {
    /// Default desk-scale network for `hamiltonian` with the given spins.
    pub fn new(n_up: usize, n_down: usize, hamiltonian: HamiltonianKind) -> Self {
        let envelope_exponent = match hamiltonian {
            HamiltonianKind::Coulomb3D { .. } | HamiltonianKind::MolecularLaser { .. } => 1.0,
            _ => 2.0,
        };
        Self {
            n_up,
            n_down,
            hamiltonian,
            envelope_exponent,
            layers: 3,
            width_1e: 32,
            width_2e: 8,
            n_determinants: 2,
            phase_hidden: default_phase_hidden(),
            envelope_hidden: default_envelope_hidden(),
        }
    }

    pub fn with_sizes(mut self, layers: usize, width_1e: usize, width_2e: usize, k: usize) -> Self {
        self.layers = layers;
        self.width_1e = width_1e;
        self.width_2e = width_2e;
        self.n_determinants = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_electrons() == 0 {
            return Err(invalid("system needs at least one electron"));
        }
        if !(self.envelope_exponent > 0.0 && self.envelope_exponent.is_finite()) {
            return Err(invalid(format!(
                "envelope exponent must be positive, got {}",
                self.envelope_exponent
            )));
        }
        if self.layers == 0 || self.width_1e == 0 || self.width_2e == 0 {
            return Err(invalid("layers and feature widths must be positive"));
        }
        if self.n_determinants == 0 {
            return Err(invalid("need at least one determinant"));
        }
        if self.phase_hidden == 0 || self.envelope_hidden == 0 {
            return Err(invalid("phase and envelope hidden widths must be positive"));
        }
        let d = self.d();
        for n in self.hamiltonian.nuclei() {
            if n.position.len() != d {
                return Err(invalid(format!(
                    "nucleus position has {} components in a {d}-dimensional problem",
                    n.position.len()
                )));
            }
        }
        if self.n_up.max(self.n_down) > 6 {
            return Err(invalid("spin blocks larger than 6 electrons are not supported"));
        }
        Ok(())
    }

    pub fn n_electrons(&self) -> usize {
        self.n_up + self.n_down
    }

    pub fn d(&self) -> usize {
        self.hamiltonian.dimension()
    }

    pub fn n_coords(&self) -> usize {
        self.n_electrons() * self.d()
    }

    /// Anchor positions of the one-electron stream and the envelopes.
    pub fn anchors(&self) -> Vec<Vec<f64>> {
        let nuclei = self.hamiltonian.nuclei();
        if nuclei.is_empty() {
            vec![vec![0.0; self.d()]]
        } else {
            nuclei.iter().map(|n| n.position.clone()).collect()
        }
    }

    pub fn n_anchors(&self) -> usize {
        self.anchors().len()
    }

    /// Electron counts of the spin channels, up first.
    pub fn channels(&self) -> [usize; 2] {
        [self.n_up, self.n_down]
    }

    /// Index of the first electron of channel `alpha`.
    pub fn channel_start(&self, alpha: usize) -> usize {
        if alpha == 0 {
            0
        } else {
            self.n_up
        }
    }

    pub fn spin_of(&self, electron: usize) -> usize {
        usize::from(electron >= self.n_up)
    }

    pub fn max_orbitals(&self) -> usize {
        self.n_up.max(self.n_down)
    }

    /// Width of the layer-0 one-electron input.
    pub fn input_1e(&self) -> usize {
        self.n_anchors() * (self.d() + 2)
    }

    pub fn input_2e(&self) -> usize {
        self.d() + 2
    }
}
