//! Quantification strategies: model-based fitting, network training, test-time
//! adaptation and plain inference.

pub mod model_based;
pub mod norm;
pub mod predict;
pub mod train;
pub mod tta;

pub use model_based::{default_init, fit_many, fit_model_based, FitConfig, FitResult};
pub use norm::{denormalize, denormalize_vec, normalize, NormContext};
pub use predict::{predict, predict_par};
pub use train::{
    train, train_self_supervised, train_supervised, Objective, ScaledMae, TrainConfig, TrainReport, ValidationPoint,
};
pub use tta::{
    predict_adapted, tta_domain, tta_instance, tta_instance_many, tta_online, AdaptConfig, BnMode, DomainResult,
    InstanceResult, OnlinePrediction, OnlineResult,
};
