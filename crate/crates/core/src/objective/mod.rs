//! Local energy, residual and initial-condition losses, continuity
//! penalties and the residual gradient estimator.

mod hamiltonian;
mod local;
mod loss;

pub use hamiltonian::{h2_nuclei, HamiltonianKind, LaserField, Nucleus, H2_HALF_BOND};
pub use local::{local_energy, residual_density};
pub use loss::{
    continuity_grad, continuity_penalties, initial_loss, initial_loss_grad, residual_grad, residual_loss,
    residual_loss_grad, total_loss, winsor_cap, BoundaryBatch, GradientMode, InitialBatch, LossReport, LossWeights,
    Penalties, SampleBatch, TimeSlice, WINSOR_MADS,
};
