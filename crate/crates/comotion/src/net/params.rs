//! Parameter store: twenty named tensors with fixed shapes, a seeded
//! uniform initializer, and a canonical iteration order shared by the
//! initializer, the checkpoint format, the optimizer state, and gradient
//! extraction.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Coordinate inputs are 2-d displacements or offsets.
pub const INPUT_DIM: usize = 2;
/// Output width of every input embedding and of the social FC.
pub const EMBED_DIM: usize = 16;
/// Hidden width of both LSTMs.
pub const HIDDEN_DIM: usize = 32;
/// Graph node feature width: encoder hidden state ++ pooled social feature.
pub const NODE_DIM: usize = HIDDEN_DIM + EMBED_DIM;
/// Hidden width of the first graph-convolution layer.
pub const GCN_HIDDEN_DIM: usize = 72;
/// Width of each route's interaction vector (second GCN layer output).
pub const ROUTE_DIM: usize = 8;
/// Latent dimension of the Gaussian head.
pub const LATENT_DIM: usize = 8;
/// Latent head output: mean ++ log-variance.
pub const STATS_DIM: usize = 2 * LATENT_DIM;
/// Decoder step input: latent sample ++ embedded previous displacement.
pub const DEC_INPUT_DIM: usize = LATENT_DIM + EMBED_DIM;

/// All learnable tensors. LSTM weights pack the four gates as columns in
/// [input, forget, cell, output] order, `hidden` columns each.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub enc_embed_w: Array2<f64>,
    pub enc_embed_b: Array2<f64>,
    pub enc_lstm_wx: Array2<f64>,
    pub enc_lstm_wh: Array2<f64>,
    pub enc_lstm_b: Array2<f64>,
    pub social_w: Array2<f64>,
    pub social_b: Array2<f64>,
    pub gcn_intra_w1: Array2<f64>,
    pub gcn_intra_w2: Array2<f64>,
    pub gcn_inter_w1: Array2<f64>,
    pub gcn_inter_w2: Array2<f64>,
    pub vae_w: Array2<f64>,
    pub vae_b: Array2<f64>,
    pub dec_embed_w: Array2<f64>,
    pub dec_embed_b: Array2<f64>,
    pub dec_lstm_wx: Array2<f64>,
    pub dec_lstm_wh: Array2<f64>,
    pub dec_lstm_b: Array2<f64>,
    pub dec_out_w: Array2<f64>,
    pub dec_out_b: Array2<f64>,
}

/// `(name, rows, cols)` for every tensor, in the canonical order.
pub const TENSOR_SHAPES: [(&str, usize, usize); 20] = [
    ("enc_embed_w", INPUT_DIM, EMBED_DIM),
    ("enc_embed_b", 1, EMBED_DIM),
    ("enc_lstm_wx", EMBED_DIM, 4 * HIDDEN_DIM),
    ("enc_lstm_wh", HIDDEN_DIM, 4 * HIDDEN_DIM),
    ("enc_lstm_b", 1, 4 * HIDDEN_DIM),
    ("social_w", INPUT_DIM, EMBED_DIM),
    ("social_b", 1, EMBED_DIM),
    ("gcn_intra_w1", NODE_DIM, GCN_HIDDEN_DIM),
    ("gcn_intra_w2", GCN_HIDDEN_DIM, ROUTE_DIM),
    ("gcn_inter_w1", NODE_DIM, GCN_HIDDEN_DIM),
    ("gcn_inter_w2", GCN_HIDDEN_DIM, ROUTE_DIM),
    ("vae_w", STATS_DIM, STATS_DIM),
    ("vae_b", 1, STATS_DIM),
    ("dec_embed_w", INPUT_DIM, EMBED_DIM),
    ("dec_embed_b", 1, EMBED_DIM),
    ("dec_lstm_wx", DEC_INPUT_DIM, 4 * HIDDEN_DIM),
    ("dec_lstm_wh", HIDDEN_DIM, 4 * HIDDEN_DIM),
    ("dec_lstm_b", 1, 4 * HIDDEN_DIM),
    ("dec_out_w", HIDDEN_DIM, INPUT_DIM),
    ("dec_out_b", 1, INPUT_DIM),
];

impl Params {
    /// Seeded initialization: each weight matrix uniform in ±1/√fan_in
    /// (fan_in = row count), biases zero. Entries are drawn tensor by
    /// tensor in canonical order, row-major within a tensor, so a seed
    /// pins every value.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut tensors = Vec::with_capacity(TENSOR_SHAPES.len());
        for (name, rows, cols) in TENSOR_SHAPES {
            let mut a = Array2::zeros((rows, cols));
            if !name.ends_with("_b") {
                let bound = 1.0 / (rows as f64).sqrt();
                for i in 0..rows {
                    for j in 0..cols {
                        a[(i, j)] = rng.gen_range(-bound..bound);
                    }
                }
            }
            tensors.push(a);
        }
        Self::from_ordered(tensors)
    }

    /// All-zero parameters (useful for contract tests).
    pub fn zeros() -> Self {
        Self::from_ordered(
            TENSOR_SHAPES.iter().map(|&(_, r, c)| Array2::zeros((r, c))).collect(),
        )
    }

    /// Rebuild from tensors listed in canonical order.
    pub fn from_ordered(mut t: Vec<Array2<f64>>) -> Self {
        assert_eq!(t.len(), TENSOR_SHAPES.len(), "expected {} tensors", TENSOR_SHAPES.len());
        for (a, (name, r, c)) in t.iter().zip(TENSOR_SHAPES) {
            assert_eq!(a.dim(), (r, c), "tensor {name} has wrong shape {:?}", a.dim());
        }
        let mut drain = t.drain(..);
        let mut next = || drain.next().expect("tensor count checked above");
        Self {
            enc_embed_w: next(),
            enc_embed_b: next(),
            enc_lstm_wx: next(),
            enc_lstm_wh: next(),
            enc_lstm_b: next(),
            social_w: next(),
            social_b: next(),
            gcn_intra_w1: next(),
            gcn_intra_w2: next(),
            gcn_inter_w1: next(),
            gcn_inter_w2: next(),
            vae_w: next(),
            vae_b: next(),
            dec_embed_w: next(),
            dec_embed_b: next(),
            dec_lstm_wx: next(),
            dec_lstm_wh: next(),
            dec_lstm_b: next(),
            dec_out_w: next(),
            dec_out_b: next(),
        }
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![
            ("enc_embed_w", &self.enc_embed_w),
            ("enc_embed_b", &self.enc_embed_b),
            ("enc_lstm_wx", &self.enc_lstm_wx),
            ("enc_lstm_wh", &self.enc_lstm_wh),
            ("enc_lstm_b", &self.enc_lstm_b),
            ("social_w", &self.social_w),
            ("social_b", &self.social_b),
            ("gcn_intra_w1", &self.gcn_intra_w1),
            ("gcn_intra_w2", &self.gcn_intra_w2),
            ("gcn_inter_w1", &self.gcn_inter_w1),
            ("gcn_inter_w2", &self.gcn_inter_w2),
            ("vae_w", &self.vae_w),
            ("vae_b", &self.vae_b),
            ("dec_embed_w", &self.dec_embed_w),
            ("dec_embed_b", &self.dec_embed_b),
            ("dec_lstm_wx", &self.dec_lstm_wx),
            ("dec_lstm_wh", &self.dec_lstm_wh),
            ("dec_lstm_b", &self.dec_lstm_b),
            ("dec_out_w", &self.dec_out_w),
            ("dec_out_b", &self.dec_out_b),
        ]
    }

    /// Mutable tensors in canonical order.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Array2<f64>)> {
        vec![
            ("enc_embed_w", &mut self.enc_embed_w),
            ("enc_embed_b", &mut self.enc_embed_b),
            ("enc_lstm_wx", &mut self.enc_lstm_wx),
            ("enc_lstm_wh", &mut self.enc_lstm_wh),
            ("enc_lstm_b", &mut self.enc_lstm_b),
            ("social_w", &mut self.social_w),
            ("social_b", &mut self.social_b),
            ("gcn_intra_w1", &mut self.gcn_intra_w1),
            ("gcn_intra_w2", &mut self.gcn_intra_w2),
            ("gcn_inter_w1", &mut self.gcn_inter_w1),
            ("gcn_inter_w2", &mut self.gcn_inter_w2),
            ("vae_w", &mut self.vae_w),
            ("vae_b", &mut self.vae_b),
            ("dec_embed_w", &mut self.dec_embed_w),
            ("dec_embed_b", &mut self.dec_embed_b),
            ("dec_lstm_wx", &mut self.dec_lstm_wx),
            ("dec_lstm_wh", &mut self.dec_lstm_wh),
            ("dec_lstm_b", &mut self.dec_lstm_b),
            ("dec_out_w", &mut self.dec_out_w),
            ("dec_out_b", &mut self.dec_out_b),
        ]
    }

    /// Total scalar count across all tensors.
    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, a)| a.len()).sum()
    }

    /// True when every entry of every tensor is finite.
    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, a)| a.iter().all(|x| x.is_finite()))
    }
}
