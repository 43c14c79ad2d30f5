//! Shared-encoder training pass over every requested ego of one window.
//!
//! The per-example pass in [`super::forward`] re-encodes the whole scene
//! for each ego, so a window of N pedestrians costs N full encoder runs
//! even though the encoder never depends on the ego. This pass records
//! the scene encoder once and hangs one small head per requested ego —
//! social feature, twin routes, latent, decoder, objective — off the
//! shared hidden states, cutting a window's cost from N full passes to
//! one encoder plus N heads.
//!
//! The route adjacencies make a second collapse exact: both masks select
//! columns, so every row of a route's adjacency is the same
//! row-stochastic vector `a`. Averaging the node features `[E ‖ p_ego]`
//! with it yields identical rows `[a·E ‖ p_ego]`, and the second
//! averaging of identical rows is the identity, so the ego's interaction
//! vector reduces to `relu([a·E ‖ p_ego]·W1)·W2` on row vectors. The
//! result matches the per-example pass up to floating-point association
//! (differences around 1e-15); [`super::forward::forward`] remains the
//! reference implementation wherever the recorded graph itself matters.

use ndarray::{Array2, Axis};

use crate::coherence::GroupLabels;
use crate::data::Window;
use crate::graph::build_masked_adjacency;
use crate::tape::{Tape, Var};

use super::forward::{
    build_encoder, build_kl, build_latent, build_social, linear, lstm_step, row2, LatentMode,
    ParamVars,
};
use super::params::{Params, HIDDEN_DIM, LATENT_DIM, STATS_DIM};

/// One ego's objective inside a shared-window pass.
pub struct EgoHead {
    pub ego: usize,
    /// The selected candidate's total objective (1×1 node).
    pub loss: Var,
    /// Its value, cached at build time.
    pub loss_value: f64,
}

/// A recorded pass over one window with per-ego objective heads.
pub struct WindowForward {
    pub tape: Tape,
    pub vars: ParamVars,
    /// One head per requested ego, in request order.
    pub heads: Vec<EgoHead>,
}

impl WindowForward {
    /// Gradients of the summed head objectives, in canonical tensor order
    /// — equal to the sum of the per-ego example gradients.
    pub fn grads_sum(&mut self) -> Vec<Array2<f64>> {
        let mut total = self.heads[0].loss;
        for k in 1..self.heads.len() {
            let loss = self.heads[k].loss;
            total = self.tape.add(total, loss);
        }
        let grads = self.tape.backward(total);
        self.vars.list().iter().map(|&v| grads.get_or_zeros(v, &self.tape)).collect()
    }
}

/// The ego's row of a route adjacency as a 1×N matrix. All rows of a
/// masked adjacency are identical, so this row carries the whole route.
fn adjacency_row(a: &Array2<f64>, ego: usize) -> Array2<f64> {
    a.row(ego).to_owned().insert_axis(Axis(0))
}

/// One route on row vectors: `relu([a·E ‖ p_ego]·W1)·W2`.
fn route(tape: &mut Tape, a_row: Array2<f64>, h_enc: Var, p_ego: Var, w1: Var, w2: Var) -> Var {
    let a = tape.leaf(a_row);
    let pooled = tape.matmul(a, h_enc);
    let h0 = tape.concat_cols(pooled, p_ego);
    let pre = tape.matmul(h0, w1);
    let l1 = tape.relu(pre);
    tape.matmul(l1, w2)
}

/// Record one shared-encoder pass covering `egos` (any order, each < N).
/// `draws[i]` holds ego `egos[i]`'s candidate noise rows; each head keeps
/// the lowest-loss candidate, so gradients flow only through the winners
/// (best-of-k variety training). `beta` weights the KL term.
pub fn forward_window(
    params: &Params,
    window: &Window,
    labels: &GroupLabels,
    egos: &[usize],
    draws: &[Vec<Array2<f64>>],
    beta: f64,
) -> WindowForward {
    let n = window.n_peds();
    assert!(n >= 1, "empty window");
    assert!(!egos.is_empty(), "no egos requested");
    assert!(egos.iter().all(|&e| e < n), "ego out of range for {n} pedestrians");
    assert_eq!(labels.n_peds(), n, "labels cover a different pedestrian count");
    assert_eq!(draws.len(), egos.len(), "one draw list per requested ego");
    assert!(draws.iter().all(|d| !d.is_empty()), "every ego needs at least one draw");
    assert!(window.obs_len >= 2, "need at least two observed steps");
    assert!(window.pred_len >= 1, "need at least one step to predict");
    assert!(
        window.peds.iter().all(|p| p.abs.iter().all(|q| q[0].is_finite() && q[1].is_finite())),
        "non-finite input coordinates"
    );

    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let h_enc = build_encoder(&mut tape, &vars, window);

    let mut heads = Vec::with_capacity(egos.len());
    for (ei, &ego) in egos.iter().enumerate() {
        let p_ego = build_social(&mut tape, &vars, window, ego);
        let (a_intra, a_inter) = build_masked_adjacency(labels, ego);
        let v_intra = route(
            &mut tape,
            adjacency_row(&a_intra, ego),
            h_enc,
            p_ego,
            vars.gcn_intra_w1,
            vars.gcn_intra_w2,
        );
        let v_inter = route(
            &mut tape,
            adjacency_row(&a_inter, ego),
            h_enc,
            p_ego,
            vars.gcn_inter_w1,
            vars.gcn_inter_w2,
        );

        let v = tape.concat_cols(v_intra, v_inter);
        let stats = linear(&mut tape, v, vars.vae_w, vars.vae_b);
        let mu = tape.slice_cols(stats, 0, LATENT_DIM);
        let logvar = tape.slice_cols(stats, LATENT_DIM, STATS_DIM);
        let kl = build_kl(&mut tape, mu, logvar);
        let kl_weighted = tape.scale(kl, beta);

        let rel = window.peds[ego].rel();
        let prev0 = tape.leaf(row2(rel[window.obs_len - 1]));
        let gt: Vec<Var> =
            (0..window.pred_len).map(|t| tape.leaf(row2(rel[window.obs_len + t]))).collect();

        // Candidates share μ/logvar (the draw only moves z), so comparing
        // total losses picks the best reconstruction.
        let mut best: Option<(Var, f64)> = None;
        for eps in &draws[ei] {
            let z = build_latent(&mut tape, mu, logvar, &LatentMode::Sample(eps.clone()));
            let mut h_d = tape.leaf(Array2::zeros((1, HIDDEN_DIM)));
            let mut c_d = tape.leaf(Array2::zeros((1, HIDDEN_DIM)));
            let mut prev = prev0;
            let mut recon_sum = tape.leaf(Array2::zeros((1, 1)));
            for &gt_t in &gt {
                let emb = linear(&mut tape, prev, vars.dec_embed_w, vars.dec_embed_b);
                let c_in = tape.concat_cols(z, emb);
                let (h2, c2) = lstm_step(
                    &mut tape,
                    c_in,
                    h_d,
                    c_d,
                    vars.dec_lstm_wx,
                    vars.dec_lstm_wh,
                    vars.dec_lstm_b,
                );
                h_d = h2;
                c_d = c2;
                let out = linear(&mut tape, h_d, vars.dec_out_w, vars.dec_out_b);
                let d = tape.sub(out, gt_t);
                let d2 = tape.mul(d, d);
                let s = tape.sum_all(d2);
                recon_sum = tape.add(recon_sum, s);
                prev = out;
            }
            let recon = tape.scale(recon_sum, 1.0 / window.pred_len as f64);
            let loss = tape.add(recon, kl_weighted);
            let value = tape.scalar(loss);
            if best.as_ref().map_or(true, |&(_, b)| value < b) {
                best = Some((loss, value));
            }
        }
        let (loss, loss_value) = best.expect("at least one draw per ego");
        heads.push(EgoHead { ego, loss, loss_value });
    }

    WindowForward { tape, vars, heads }
}
