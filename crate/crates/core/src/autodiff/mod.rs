//! Derivative engine.
//!
//! Two directions are combined. Spatial and time derivatives of a
//! wavefunction program are pushed forward as [`Jet`]s (value, gradient
//! rows, Laplacian accumulator, time tangent). Every jet component is a node
//! on a reverse-mode [`Graph`], so any scalar built from them (residuals,
//! penalties) can be differentiated with respect to the parameters in one
//! backward sweep.

mod jet;
mod program;
mod tape;

pub use jet::{ComplexJet, Ctx, Jet, JetMode};
pub use program::{
    build_wave, collect_gradient, evaluate_bundle, evaluate_bundles, grad_params, log_abs_values,
    psi_values, register_params, CVar, DerivativeBundle, ParamGradient, WaveEval, WaveOutput,
    WaveProgram, NODE_LOG_ABS_THRESHOLD,
};
pub use tape::{Gradients, Graph, RowMix, Unary, Var};
