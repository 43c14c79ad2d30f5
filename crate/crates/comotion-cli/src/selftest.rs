//! Built-in correctness checks: a condensed, seeded version of the
//! gradient, clustering, graph, and metric validation the test suite
//! runs at full depth. Prints one line per check; any failure exits
//! nonzero through the normal error path.

use anyhow::{ensure, Result};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use comotion::coherence::{hybrid_label, ClusteringParams, GroupLabels, LabelSource, NOISE};
use comotion::data::{PedTrack, Window};
use comotion::eval::{discrete_frechet, displacement_errors};
use comotion::graph::build_masked_adjacency;
use comotion::net::{forward, LatentMode, Params, LATENT_DIM};

pub fn run() -> Result<()> {
    let checks: [(&str, fn() -> Result<String>); 5] = [
        ("analytic gradients match finite differences", gradients),
        ("hybrid labeling handles the canonical regimes", labeling),
        ("masked adjacencies are row-stochastic and equivariant", graph),
        ("displacement and Fréchet metrics are exact", metrics),
        ("predictions ignore non-ego ordering", ego_invariance),
    ];
    for (name, check) in checks {
        let detail = check()?;
        println!("ok: {name} ({detail})");
    }
    println!("selftest passed");
    Ok(())
}

// ── shared helpers ──────────────────────────────────────────────────

fn random_window(rng: &mut ChaCha12Rng, id: u64, n: usize) -> Window {
    let peds = (0..n)
        .map(|p| {
            let mut pos = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let vel = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
            let mut abs = vec![pos];
            for _ in 1..20 {
                pos[0] += vel[0] + rng.gen_range(-0.04..0.04);
                pos[1] += vel[1] + rng.gen_range(-0.04..0.04);
                abs.push(pos);
            }
            PedTrack { ped_id: p as i64 + 1, abs }
        })
        .collect();
    Window { id, dataset: "selftest".into(), obs_len: 8, pred_len: 12, peds }
}

fn random_labels(rng: &mut ChaCha12Rng, n: usize) -> GroupLabels {
    // Pair up a shuffled prefix; the rest stay noise.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut group = vec![NOISE; n];
    let mut next = 0i64;
    let mut i = 0;
    while i + 1 < n {
        if rng.gen_bool(0.5) {
            group[order[i]] = next;
            group[order[i + 1]] = next;
            next += 1;
        }
        i += 2;
    }
    canonical(&mut group);
    let source = group
        .iter()
        .map(|&g| if g == NOISE { LabelSource::Noise } else { LabelSource::Coherent })
        .collect();
    GroupLabels { group, source }
}

/// Renumber group ids consecutively by smallest member.
fn canonical(group: &mut [i64]) {
    let mut map: Vec<(i64, i64)> = Vec::new();
    let mut next = 0i64;
    for g in group.iter_mut() {
        if *g == NOISE {
            continue;
        }
        match map.iter().find(|(o, _)| o == g) {
            Some(&(_, n)) => *g = n,
            None => {
                map.push((*g, next));
                *g = next;
                next += 1;
            }
        }
    }
}

fn normal_row(rng: &mut ChaCha12Rng, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((1, d), |_| rng.sample::<f64, _>(StandardNormal))
}

// ── checks ──────────────────────────────────────────────────────────

fn gradients() -> Result<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let params = Params::init(11);
    let window = random_window(&mut rng, 0, 3);
    let labels = random_labels(&mut rng, 3);
    let eps = normal_row(&mut rng, LATENT_DIM);
    let mode = LatentMode::Sample(eps);

    let analytic = forward(&params, &window, 1, &labels, &mode, 1.0).param_grads();
    let loss = |p: &Params| forward(p, &window, 1, &labels, &mode, 1.0).loss_value();

    let shapes: Vec<(usize, usize)> = params.tensors().iter().map(|(_, t)| t.dim()).collect();
    let h = 1e-5;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for (ti, &(rows, cols)) in shapes.iter().enumerate() {
        for _ in 0..16 {
            let (r, c) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
            let mut plus = params.clone();
            plus.tensors_mut()[ti].1[(r, c)] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].1[(r, c)] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = analytic[ti][(r, c)];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-5);
            ensure!(
                rel <= 1e-4,
                "gradient mismatch at tensor {ti} entry ({r},{c}): analytic {a:.3e}, finite difference {fd:.3e}"
            );
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Ok(format!("{checked} sampled entries, worst relative error {worst:.1e}"))
}

fn labeling() -> Result<String> {
    let params = ClusteringParams::default();
    let line = |start: [f64; 2], v: [f64; 2]| -> Vec<[f64; 2]> {
        (0..params.label_frames)
            .map(|t| [start[0] + v[0] * t as f64, start[1] + v[1] * t as f64])
            .collect()
    };

    // Side-by-side walkers form one group.
    let pair = vec![line([0.0, 0.0], [0.6, 0.0]), line([0.0, 0.7], [0.6, 0.0])];
    let l = hybrid_label(&pair, &params);
    ensure!(l.group == vec![0, 0], "parallel pair not grouped: {:?}", l.group);

    // Opposite headings stay apart.
    let opposed = vec![line([0.0, 0.0], [0.6, 0.0]), line([3.0, 0.5], [-0.6, 0.0])];
    let l = hybrid_label(&opposed, &params);
    ensure!(l.group == vec![NOISE, NOISE], "opposed pair wrongly grouped: {:?}", l.group);

    // A pausing companion fails velocity correlation but is recovered by
    // the density stage.
    let steady = line([0.0, 0.0], [1.0, 0.0]);
    let pausing = vec![[0.0, 0.5], [1.0, 0.5], [1.0, 0.5], [2.0, 0.5], [3.5, 0.5]];
    let l = hybrid_label(&vec![steady, pausing], &params);
    ensure!(l.group == vec![0, 0], "pausing companion not recovered: {:?}", l.group);
    ensure!(
        l.source == vec![LabelSource::Density, LabelSource::Density],
        "recovery not attributed to the density stage: {:?}",
        l.source
    );
    Ok("parallel, opposed, and pausing regimes labeled as expected".into())
}

fn graph() -> Result<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    for _ in 0..200 {
        let n = rng.gen_range(1..=8usize);
        let labels = random_labels(&mut rng, n);
        let ego = rng.gen_range(0..n);
        let (a_intra, a_inter) = build_masked_adjacency(&labels, ego);

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut group = vec![NOISE; n];
        let mut source = vec![LabelSource::Noise; n];
        for i in 0..n {
            group[perm[i]] = labels.group[i];
            source[perm[i]] = labels.source[i];
        }
        let (p_intra, p_inter) = build_masked_adjacency(&GroupLabels { group, source }, perm[ego]);

        for (a, p) in [(&a_intra, &p_intra), (&a_inter, &p_inter)] {
            for (i, row) in a.rows().into_iter().enumerate() {
                let s: f64 = row.sum();
                ensure!(s.is_finite() && (s - 1.0).abs() <= 1e-12, "row {i} sums to {s}");
            }
            for i in 0..n {
                for j in 0..n {
                    ensure!(
                        (a[(i, j)] - p[(perm[i], perm[j])]).abs() <= 1e-10,
                        "adjacency not permutation-equivariant at ({i},{j})"
                    );
                }
            }
        }
    }
    Ok("200 random labelings".into())
}

fn metrics() -> Result<String> {
    let gt: Vec<[f64; 2]> = (0..12).map(|t| [0.25 * t as f64, 0.0]).collect();
    ensure!(displacement_errors(&gt, &gt) == (0.0, 0.0), "self-comparison must be exact zero");
    let off: Vec<[f64; 2]> = gt.iter().map(|p| [p[0], p[1] + 2.0]).collect();
    ensure!(displacement_errors(&off, &gt) == (2.0, 2.0), "constant offset must score exactly");

    // Dynamic program vs brute-force recursion over all couplings.
    fn oracle(a: &[[f64; 2]], b: &[[f64; 2]], i: usize, j: usize) -> f64 {
        let d = ((a[i][0] - b[j][0]).powi(2) + (a[i][1] - b[j][1]).powi(2)).sqrt();
        let prior = match (i, j) {
            (0, 0) => return d,
            (0, _) => oracle(a, b, 0, j - 1),
            (_, 0) => oracle(a, b, i - 1, 0),
            _ => oracle(a, b, i - 1, j)
                .min(oracle(a, b, i, j - 1))
                .min(oracle(a, b, i - 1, j - 1)),
        };
        d.max(prior)
    }
    let mut rng = ChaCha12Rng::seed_from_u64(303);
    for _ in 0..100 {
        let track = |rng: &mut ChaCha12Rng| -> Vec<[f64; 2]> {
            let len = rng.gen_range(1..=5usize);
            (0..len).map(|_| [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)]).collect()
        };
        let (a, b) = (track(&mut rng), track(&mut rng));
        let fast = discrete_frechet(&a, &b);
        let slow = oracle(&a, &b, a.len() - 1, b.len() - 1);
        ensure!((fast - slow).abs() <= 1e-12, "Fréchet mismatch: {fast} vs {slow}");
        ensure!(
            (discrete_frechet(&b, &a) - fast).abs() <= 1e-12,
            "Fréchet must be symmetric"
        );
    }
    Ok("exact displacement cases and 100 Fréchet coupling trials".into())
}

fn ego_invariance() -> Result<String> {
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    let params = Params::init(5);
    for trial in 0..5u64 {
        let n = rng.gen_range(2..=6usize);
        let window = random_window(&mut rng, trial, n);
        let labels = random_labels(&mut rng, n);
        let ego = rng.gen_range(0..n);
        let base = forward(&params, &window, ego, &labels, &LatentMode::Mean, 1.0).pred_abs();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut peds = vec![None; n];
        let mut group = vec![NOISE; n];
        let mut source = vec![LabelSource::Noise; n];
        for i in 0..n {
            peds[perm[i]] = Some(window.peds[i].clone());
            group[perm[i]] = labels.group[i];
            source[perm[i]] = labels.source[i];
        }
        let shuffled = Window {
            id: window.id,
            dataset: window.dataset.clone(),
            obs_len: window.obs_len,
            pred_len: window.pred_len,
            peds: peds.into_iter().map(Option::unwrap).collect(),
        };
        let moved = forward(
            &params,
            &shuffled,
            perm[ego],
            &GroupLabels { group, source },
            &LatentMode::Mean,
            1.0,
        )
        .pred_abs();
        for (a, b) in base.iter().zip(&moved) {
            ensure!(
                (a[0] - b[0]).abs() <= 1e-10 && (a[1] - b[1]).abs() <= 1e-10,
                "prediction changed when non-ego pedestrians were permuted"
            );
        }
    }
    Ok("5 permuted scenes".into())
}
