//! Inference for the μ regressor and the noise classifier.

pub mod arch;
pub mod forward;
pub mod infer;
pub mod weights;

pub use arch::{Architecture, LayerSpec};
pub use forward::Network;
pub use infer::{
    classify_image, forward_classifier, forward_regressor, majority_vote, predict_mu_map,
    predict_mu_map_with, Classification, Classifier, Regressor,
};
pub use weights::{load_weights, save_weights, Tensor, WeightBundle};
