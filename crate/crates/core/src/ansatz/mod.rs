//! The antisymmetric spatiotemporal network ansatz.
//!
//! Two independent evaluation routes are provided: [`reference`] works on a
//! single configuration with dense arithmetic and log-domain determinants,
//! while [`FastNet`] builds the same function as a batched tape program that
//! also yields spatial, time and parameter derivatives.

mod checkpoint;
mod params;
mod program;
pub mod reference;
mod spec;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, save_checkpoint, shape_diff, Checkpoint, CheckpointManifest,
    CHECKPOINT_FORMAT,
};
pub use params::{
    envelope_counts, init_params, pi_column, sigma_column, NetworkParams, ParamLayout, TensorInfo,
};
pub use program::FastNet;
pub use reference::{
    envelope, equivariant_block, feature_streams, log_psi, phase_factor, FeatureStreams,
};
pub use spec::SystemSpec;
