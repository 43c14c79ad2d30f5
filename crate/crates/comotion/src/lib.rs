//! Coherent-motion-aware trajectory forecasting for pedestrian crowds.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`data`]: annotation parsing, fixed-length prediction windows,
//!   relative/absolute coordinate conversion, leave-one-out splits, and a
//!   versioned window cache format.
//! - [`coherence`]: offline hybrid group labeling — coherent filtering
//!   (invariant K-nearest neighbors + time-averaged velocity correlation)
//!   with a DBSCAN refinement pass for the pedestrians the filter leaves
//!   unlabeled.
//! - [`graph`]: ego-specific intra-/inter-group adjacency matrices (binary
//!   base connectivity, coherence masks, row normalization).
//! - [`tape`]: a minimal reverse-mode autodiff engine over dense `f64`
//!   matrices; every network gradient in this crate flows through it.
//! - [`net`]: the forecasting network — LSTM encoder with a social pooling
//!   feature, twin two-layer GCNs, a Gaussian latent head with
//!   reparameterized sampling, a self-feeding LSTM decoder — plus the
//!   training loop (Adam) and a text checkpoint format.
//! - [`eval`]: ADE/FDE with best-of-N sampling, discrete Fréchet distance,
//!   labeling-rate and group-similarity reports.
//! - [`synth`]: deterministic synthetic scene generation for tests and
//!   smoke runs.
//!
//! All computation is double precision and deterministic for a fixed seed.

pub mod coherence;
pub mod data;
pub mod eval;
pub mod graph;
pub mod net;
pub mod synth;
pub mod tape;

mod error;

pub use error::{Error, Result};
