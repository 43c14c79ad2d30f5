//! Tape-built forward pass for one (window, ego) example.
//!
//! Pipeline: shared LSTM encoder over every pedestrian's observed relative
//! displacements → ego's max-pooled social feature → node features
//! `[hidden ‖ social]` → twin two-layer GCNs over the intra/inter masked
//! adjacencies → ego rows as interaction vectors → Gaussian latent head
//! (reparameterized sample or mean) → self-feeding LSTM decoder emitting
//! relative displacements → reconstruction + KL objective.
//!
//! The whole pass records onto one [`Tape`], so `backward` on the loss
//! yields exact gradients for every parameter, including paths through the
//! decoder's self-feeding loop and the reparameterized sample.

use ndarray::Array2;

use crate::coherence::GroupLabels;
use crate::data::Window;
use crate::graph::build_masked_adjacency;
use crate::tape::{Tape, Var};

use super::params::{
    Params, EMBED_DIM, HIDDEN_DIM, LATENT_DIM, STATS_DIM,
};

/// How the latent sample is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentMode {
    /// Deterministic: use the posterior mean.
    Mean,
    /// Reparameterized sample `z = μ + exp(logvar/2) ⊙ ε` with the given
    /// 1×8 standard-normal draw held fixed (gradients flow through μ and
    /// logvar only).
    Sample(Array2<f64>),
}

/// Tape handles for every parameter tensor, in canonical order.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub enc_embed_w: Var,
    pub enc_embed_b: Var,
    pub enc_lstm_wx: Var,
    pub enc_lstm_wh: Var,
    pub enc_lstm_b: Var,
    pub social_w: Var,
    pub social_b: Var,
    pub gcn_intra_w1: Var,
    pub gcn_intra_w2: Var,
    pub gcn_inter_w1: Var,
    pub gcn_inter_w2: Var,
    pub vae_w: Var,
    pub vae_b: Var,
    pub dec_embed_w: Var,
    pub dec_embed_b: Var,
    pub dec_lstm_wx: Var,
    pub dec_lstm_wh: Var,
    pub dec_lstm_b: Var,
    pub dec_out_w: Var,
    pub dec_out_b: Var,
}

impl ParamVars {
    /// Insert every tensor as a leaf, in canonical order.
    pub fn register(tape: &mut Tape, p: &Params) -> Self {
        Self {
            enc_embed_w: tape.leaf(p.enc_embed_w.clone()),
            enc_embed_b: tape.leaf(p.enc_embed_b.clone()),
            enc_lstm_wx: tape.leaf(p.enc_lstm_wx.clone()),
            enc_lstm_wh: tape.leaf(p.enc_lstm_wh.clone()),
            enc_lstm_b: tape.leaf(p.enc_lstm_b.clone()),
            social_w: tape.leaf(p.social_w.clone()),
            social_b: tape.leaf(p.social_b.clone()),
            gcn_intra_w1: tape.leaf(p.gcn_intra_w1.clone()),
            gcn_intra_w2: tape.leaf(p.gcn_intra_w2.clone()),
            gcn_inter_w1: tape.leaf(p.gcn_inter_w1.clone()),
            gcn_inter_w2: tape.leaf(p.gcn_inter_w2.clone()),
            vae_w: tape.leaf(p.vae_w.clone()),
            vae_b: tape.leaf(p.vae_b.clone()),
            dec_embed_w: tape.leaf(p.dec_embed_w.clone()),
            dec_embed_b: tape.leaf(p.dec_embed_b.clone()),
            dec_lstm_wx: tape.leaf(p.dec_lstm_wx.clone()),
            dec_lstm_wh: tape.leaf(p.dec_lstm_wh.clone()),
            dec_lstm_b: tape.leaf(p.dec_lstm_b.clone()),
            dec_out_w: tape.leaf(p.dec_out_w.clone()),
            dec_out_b: tape.leaf(p.dec_out_b.clone()),
        }
    }

    /// Handles in the same order as [`Params::tensors`].
    pub fn list(&self) -> [Var; 20] {
        [
            self.enc_embed_w,
            self.enc_embed_b,
            self.enc_lstm_wx,
            self.enc_lstm_wh,
            self.enc_lstm_b,
            self.social_w,
            self.social_b,
            self.gcn_intra_w1,
            self.gcn_intra_w2,
            self.gcn_inter_w1,
            self.gcn_inter_w2,
            self.vae_w,
            self.vae_b,
            self.dec_embed_w,
            self.dec_embed_b,
            self.dec_lstm_wx,
            self.dec_lstm_wh,
            self.dec_lstm_b,
            self.dec_out_w,
            self.dec_out_b,
        ]
    }
}

pub(super) fn row2(v: [f64; 2]) -> Array2<f64> {
    Array2::from_shape_vec((1, 2), vec![v[0], v[1]]).expect("1x2 shape")
}

/// One four-gate LSTM step. Weight columns pack the gates in
/// [input, forget, cell, output] order.
pub(super) fn lstm_step(
    tape: &mut Tape,
    x: Var,
    h: Var,
    c: Var,
    wx: Var,
    wh: Var,
    b: Var,
) -> (Var, Var) {
    let hid = tape.value(h).ncols();
    let xg = tape.matmul(x, wx);
    let hg = tape.matmul(h, wh);
    let s = tape.add(xg, hg);
    let pre = tape.add_row(s, b);
    let i_pre = tape.slice_cols(pre, 0, hid);
    let f_pre = tape.slice_cols(pre, hid, 2 * hid);
    let g_pre = tape.slice_cols(pre, 2 * hid, 3 * hid);
    let o_pre = tape.slice_cols(pre, 3 * hid, 4 * hid);
    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);
    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_new = tape.add(fc, ig);
    let c_tanh = tape.tanh(c_new);
    let h_new = tape.mul(o, c_tanh);
    (h_new, c_new)
}

/// Linear layer with a row-broadcast bias.
pub(super) fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let xw = tape.matmul(x, w);
    tape.add_row(xw, b)
}

/// One graph-convolution layer `A·H·W`, ReLU-activated unless it is the
/// final (linear) layer. `A` must be row-stochastic.
pub fn gcn_layer(tape: &mut Tape, h: Var, a: Var, w: Var, activate: bool) -> Var {
    {
        let av = tape.value(a);
        assert_eq!(av.nrows(), av.ncols(), "adjacency must be square");
        for (i, row) in av.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-9, "adjacency row {i} sums to {s}, not 1");
        }
    }
    let ah = tape.matmul(a, h);
    let ahw = tape.matmul(ah, w);
    if activate {
        tape.relu(ahw)
    } else {
        ahw
    }
}

/// Latent sample node: the mean itself, or `μ + exp(logvar/2) ⊙ ε`.
pub fn build_latent(tape: &mut Tape, mu: Var, logvar: Var, mode: &LatentMode) -> Var {
    match mode {
        LatentMode::Mean => mu,
        LatentMode::Sample(eps) => {
            assert_eq!(eps.dim(), tape.value(mu).dim(), "noise draw shape mismatch");
            let half = tape.scale(logvar, 0.5);
            let std = tape.exp(half);
            let e = tape.leaf(eps.clone());
            let noise = tape.mul(std, e);
            tape.add(mu, noise)
        }
    }
}

/// KL divergence of the diagonal Gaussian `N(μ, exp(logvar))` from the
/// standard normal: `½ Σ (μ² + exp(logvar) − logvar − 1)`. Always ≥ 0.
pub fn build_kl(tape: &mut Tape, mu: Var, logvar: Var) -> Var {
    let mu2 = tape.mul(mu, mu);
    let ev = tape.exp(logvar);
    let s0 = tape.add(mu2, ev);
    let s1 = tape.sub(s0, logvar);
    let s2 = tape.offset(s1, -1.0);
    let total = tape.sum_all(s2);
    tape.scale(total, 0.5)
}

/// Shared encoder over every pedestrian: embed each observed relative
/// displacement, run the LSTM from zero state, return the final hidden
/// states as an N×hidden node (rows are independent, weights shared).
pub(super) fn build_encoder(tape: &mut Tape, vars: &ParamVars, window: &Window) -> Var {
    let n = window.n_peds();
    let rels: Vec<Vec<[f64; 2]>> = window.peds.iter().map(|p| p.rel()).collect();
    let mut h = tape.leaf(Array2::zeros((n, HIDDEN_DIM)));
    let mut c = tape.leaf(Array2::zeros((n, HIDDEN_DIM)));
    for t in 0..window.obs_len {
        let mut x = Array2::zeros((n, 2));
        for (i, rel) in rels.iter().enumerate() {
            x[(i, 0)] = rel[t][0];
            x[(i, 1)] = rel[t][1];
        }
        let xv = tape.leaf(x);
        let emb = linear(tape, xv, vars.enc_embed_w, vars.enc_embed_b);
        let (h2, c2) = lstm_step(tape, emb, h, c, vars.enc_lstm_wx, vars.enc_lstm_wh, vars.enc_lstm_b);
        h = h2;
        c = c2;
    }
    h
}

/// Ego's social feature: FC-embed every neighbor's offset (pos_j − pos_i
/// at the last observed frame) and max-pool elementwise over neighbors.
/// Zero vector when the ego is alone.
pub(super) fn build_social(tape: &mut Tape, vars: &ParamVars, window: &Window, ego: usize) -> Var {
    let n = window.n_peds();
    if n == 1 {
        return tape.leaf(Array2::zeros((1, EMBED_DIM)));
    }
    let last = window.obs_len - 1;
    let ego_pos = window.peds[ego].abs[last];
    let mut off = Array2::zeros((n - 1, 2));
    let mut r = 0;
    for (j, p) in window.peds.iter().enumerate() {
        if j == ego {
            continue;
        }
        off[(r, 0)] = p.abs[last][0] - ego_pos[0];
        off[(r, 1)] = p.abs[last][1] - ego_pos[1];
        r += 1;
    }
    let o = tape.leaf(off);
    let emb = linear(tape, o, vars.social_w, vars.social_b);
    tape.max_rows(emb)
}

/// Encoder outputs as plain values: `(e, p)` where row j of `e` is
/// pedestrian j's final hidden state and row i of `p` is pedestrian i's
/// pooled social feature.
pub fn encode_scene(params: &Params, window: &Window) -> (Array2<f64>, Array2<f64>) {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let h = build_encoder(&mut tape, &vars, window);
    let n = window.n_peds();
    let mut p = Array2::zeros((n, EMBED_DIM));
    for i in 0..n {
        let pi = build_social(&mut tape, &vars, window, i);
        p.row_mut(i).assign(&tape.value(pi).row(0));
    }
    (tape.value(h).clone(), p)
}

/// One recorded forward pass for a single (window, ego) example.
pub struct SceneForward {
    pub tape: Tape,
    pub vars: ParamVars,
    /// Total objective (1×1).
    pub loss: Var,
    /// Reconstruction term (1×1).
    pub recon: Var,
    /// KL term before the β weight (1×1).
    pub kl: Var,
    pub mu: Var,
    pub logvar: Var,
    pub v_intra: Var,
    pub v_inter: Var,
    /// Predicted relative displacement per future step (each 1×2).
    pub pred_steps: Vec<Var>,
    last_obs_abs: [f64; 2],
}

impl SceneForward {
    pub fn loss_value(&self) -> f64 {
        self.tape.scalar(self.loss)
    }

    pub fn recon_value(&self) -> f64 {
        self.tape.scalar(self.recon)
    }

    pub fn kl_value(&self) -> f64 {
        self.tape.scalar(self.kl)
    }

    fn row_vec(&self, v: Var) -> Vec<f64> {
        self.tape.value(v).row(0).to_vec()
    }

    pub fn mu_value(&self) -> Vec<f64> {
        self.row_vec(self.mu)
    }

    pub fn logvar_value(&self) -> Vec<f64> {
        self.row_vec(self.logvar)
    }

    pub fn v_intra_value(&self) -> Vec<f64> {
        self.row_vec(self.v_intra)
    }

    pub fn v_inter_value(&self) -> Vec<f64> {
        self.row_vec(self.v_inter)
    }

    /// Predicted relative displacements, one per future step.
    pub fn pred_rel(&self) -> Vec<[f64; 2]> {
        self.pred_steps
            .iter()
            .map(|&v| {
                let a = self.tape.value(v);
                [a[(0, 0)], a[(0, 1)]]
            })
            .collect()
    }

    /// Predicted absolute positions: cumulative sum of the displacements
    /// from the last observed position.
    pub fn pred_abs(&self) -> Vec<[f64; 2]> {
        let mut cur = self.last_obs_abs;
        self.pred_rel()
            .iter()
            .map(|d| {
                cur = [cur[0] + d[0], cur[1] + d[1]];
                cur
            })
            .collect()
    }

    /// Exact loss gradients for every parameter tensor, in canonical order
    /// (zeros for tensors the loss does not touch).
    pub fn param_grads(&self) -> Vec<Array2<f64>> {
        let grads = self.tape.backward(self.loss);
        self.vars.list().iter().map(|&v| grads.get_or_zeros(v, &self.tape)).collect()
    }
}

/// Record the full forward pass for one ego. `beta` weights the KL term.
pub fn forward(
    params: &Params,
    window: &Window,
    ego: usize,
    labels: &GroupLabels,
    mode: &LatentMode,
    beta: f64,
) -> SceneForward {
    let n = window.n_peds();
    assert!(n >= 1, "empty window");
    assert!(ego < n, "ego {ego} out of range for {n} pedestrians");
    assert_eq!(labels.n_peds(), n, "labels cover a different pedestrian count");
    assert!(window.obs_len >= 2, "need at least two observed steps");
    assert!(window.pred_len >= 1, "need at least one step to predict");
    assert!(
        window.peds.iter().all(|p| p.abs.iter().all(|q| q[0].is_finite() && q[1].is_finite())),
        "non-finite input coordinates"
    );

    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);

    // Encoder and ego's social feature → node features [e_j ‖ p_ego].
    let h_enc = build_encoder(&mut tape, &vars, window);
    let p_ego = build_social(&mut tape, &vars, window, ego);
    let p_rep = tape.repeat_rows(p_ego, n);
    let h0 = tape.concat_cols(h_enc, p_rep);

    // Twin GCN routes over the masked adjacencies; keep the ego rows.
    let (a_intra, a_inter) = build_masked_adjacency(labels, ego);
    let ai = tape.leaf(a_intra);
    let ae = tape.leaf(a_inter);
    let li1 = gcn_layer(&mut tape, h0, ai, vars.gcn_intra_w1, true);
    let li2 = gcn_layer(&mut tape, li1, ai, vars.gcn_intra_w2, false);
    let v_intra = tape.row(li2, ego);
    let le1 = gcn_layer(&mut tape, h0, ae, vars.gcn_inter_w1, true);
    let le2 = gcn_layer(&mut tape, le1, ae, vars.gcn_inter_w2, false);
    let v_inter = tape.row(le2, ego);

    // Gaussian latent head on the concatenated interaction vectors.
    let v = tape.concat_cols(v_intra, v_inter);
    let stats = linear(&mut tape, v, vars.vae_w, vars.vae_b);
    let mu = tape.slice_cols(stats, 0, LATENT_DIM);
    let logvar = tape.slice_cols(stats, LATENT_DIM, STATS_DIM);
    let z = build_latent(&mut tape, mu, logvar, mode);

    // Self-feeding decoder from zero state; the first "previous
    // displacement" is the ego's last observed one.
    let rel = window.peds[ego].rel();
    let mut h_d = tape.leaf(Array2::zeros((1, HIDDEN_DIM)));
    let mut c_d = tape.leaf(Array2::zeros((1, HIDDEN_DIM)));
    let mut prev = tape.leaf(row2(rel[window.obs_len - 1]));
    let mut pred_steps = Vec::with_capacity(window.pred_len);
    for _ in 0..window.pred_len {
        let emb = linear(&mut tape, prev, vars.dec_embed_w, vars.dec_embed_b);
        let c_in = tape.concat_cols(z, emb);
        let (h2, c2) =
            lstm_step(&mut tape, c_in, h_d, c_d, vars.dec_lstm_wx, vars.dec_lstm_wh, vars.dec_lstm_b);
        h_d = h2;
        c_d = c2;
        let out = linear(&mut tape, h_d, vars.dec_out_w, vars.dec_out_b);
        pred_steps.push(out);
        prev = out;
    }

    // Mean squared L2 over predicted displacements, plus β·KL.
    let mut recon_sum = tape.leaf(Array2::zeros((1, 1)));
    for (t, &pv) in pred_steps.iter().enumerate() {
        let gt = tape.leaf(row2(rel[window.obs_len + t]));
        let d = tape.sub(pv, gt);
        let d2 = tape.mul(d, d);
        let s = tape.sum_all(d2);
        recon_sum = tape.add(recon_sum, s);
    }
    let recon = tape.scale(recon_sum, 1.0 / window.pred_len as f64);
    let kl = build_kl(&mut tape, mu, logvar);
    let kl_weighted = tape.scale(kl, beta);
    let loss = tape.add(recon, kl_weighted);

    SceneForward {
        tape,
        vars,
        loss,
        recon,
        kl,
        mu,
        logvar,
        v_intra,
        v_inter,
        pred_steps,
        last_obs_abs: window.peds[ego].abs[window.obs_len - 1],
    }
}
