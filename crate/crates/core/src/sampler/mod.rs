//! Metropolis-Hastings sampling of `|psi|^2` at fixed time.

mod chain;
mod density;
mod slices;

pub use chain::{
    burn_in, initial_positions, mh_chain, mix_seed, sample_conditional, sample_initial, ChainDiagnostics,
    SamplerConfig, WalkerState, STALL_WINDOW,
};
pub use density::{NetworkDensity, OracleDensity, TimeDensity};
pub use slices::{SliceDraw, SliceSampler};
