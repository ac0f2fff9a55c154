pub mod ansatz;
pub mod autodiff;
pub mod error;
pub mod numerics;
pub mod metrics;
pub mod objective;
pub mod oracles;
pub mod persist;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
