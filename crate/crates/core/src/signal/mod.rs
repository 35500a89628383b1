//! Parametric forward model, noise and corruption.

mod forward;
mod noise;
mod params;

pub use forward::SignalModel;
pub use noise::{add_noise, apply_random_walk, compute_snr, moving_average, NoiseSpec, RandomWalkSpec, SMOOTHING_SCALE};
pub use params::{ModelParams, ParamLayout};
