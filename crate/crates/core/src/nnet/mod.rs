//! Multilayer perceptron, output head, optimizer and checkpoints.

mod adam;
mod checkpoint;
mod head;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use head::{softplus, softplus_inv, Head, DEFAULT_PHI1_SCALE};
pub use mlp::{BnStats, ForwardCache, Mlp, MlpSpec, BN_EPS, BN_MOMENTUM, NORM_TOL};
