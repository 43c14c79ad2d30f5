//! The forecasting network: shared LSTM trajectory encoder with a pooled
//! social feature, twin two-layer graph convolutions over the intra/inter
//! coherence routes, a Gaussian latent head with reparameterized sampling,
//! and a self-feeding LSTM decoder — plus the VAE training objective,
//! exact reverse-mode gradients, and Adam training.
//!
//! Everything runs in `f64`: the finite-difference gradient tolerance of
//! 1e-4 is only meaningful at double precision.

mod checkpoint;
mod forward;
mod params;
mod train;
mod window;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{
    build_kl, build_latent, encode_scene, forward, gcn_layer, LatentMode, ParamVars, SceneForward,
};
pub use window::{forward_window, EgoHead, WindowForward};
pub use params::{
    Params, DEC_INPUT_DIM, EMBED_DIM, GCN_HIDDEN_DIM, HIDDEN_DIM, INPUT_DIM, LATENT_DIM, NODE_DIM,
    ROUTE_DIM, STATS_DIM, TENSOR_SHAPES,
};
pub use train::{train, Adam, TrainConfig, TrainResult};
