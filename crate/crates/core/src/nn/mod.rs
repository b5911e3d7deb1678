//! Small feed-forward networks with hand-written reverse-mode gradients.

pub mod gradcheck;
mod mlp;
mod optim;
mod squashed;

pub use mlp::{Activation, Mlp, Trace, LAYOUT_VERSION};
pub use optim::{Optimizer, OptimizerKind};
pub use squashed::{LogDensity, SquashedGaussianHead, SquashedSample, JACOBIAN_EPS, LOG_STD_MAX, LOG_STD_MIN};
