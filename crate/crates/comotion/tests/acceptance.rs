//! End-to-end acceptance gates for the whole pipeline.
//!
//! Each criterion prints exactly one line — `criterion N (name): PASS/FAIL/SKIP — detail` —
//! and the test fails if any criterion fails. Criterion 7 is skipped
//! (not failed) when no real dataset directory is configured.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use comotion::coherence::{
    coherent_filter, dbscan_refine, label_window, labeling_stats, ClusteringParams, GroupLabels,
    LabelSource, NOISE,
};
use comotion::data::{parse_trajectory_file, ColumnOrder, PedTrack, Window};
use comotion::eval::{
    best_of_n, discrete_frechet, displacement_errors, evaluate, group_similarity, EvalMode,
    REFERENCE_ADE_FDE, REFERENCE_LABELING_RATES,
};
use comotion::graph::{build_masked_adjacency, row_normalize};
use comotion::net::{forward, train, LatentMode, Params, TrainConfig, LATENT_DIM};
use comotion::synth::{generate, SynthConfig};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

/// Print one verdict line so it shows up in a plain `cargo test` run.
/// Writing to the stdout handle directly sidesteps the harness's output
/// capture, which would otherwise swallow the report when the gate passes.
fn report(line: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").and_then(|()| out.flush()).expect("stdout");
}

#[test]
fn acceptance() {
    let gates: Vec<(&str, fn() -> Verdict)> = vec![
        ("gradient oracle", gradient_oracle),
        ("clustering oracle equivalence", clustering_oracle),
        ("graph invariants", graph_invariants),
        ("ego invariance", ego_invariance),
        ("training smoke", training_smoke),
        ("metric unit suite", metric_suite),
        ("real-data labeling reproduction", real_data_reproduction),
        ("reference comparison", reference_comparison),
    ];
    let mut failures = Vec::new();
    for (i, (name, gate)) in gates.iter().enumerate() {
        let n = i + 1;
        match gate() {
            Verdict::Pass(d) => report(&format!("criterion {n} ({name}): PASS — {d}")),
            Verdict::Skip(d) => report(&format!("criterion {n} ({name}): SKIP — {d}")),
            Verdict::Fail(d) => {
                report(&format!("criterion {n} ({name}): FAIL — {d}"));
                failures.push(format!("criterion {n} ({name}): {d}"));
            }
        }
    }
    assert!(failures.is_empty(), "failed acceptance criteria:\n{}", failures.join("\n"));
}

// ── shared scene generators ─────────────────────────────────────────

/// Random smooth 20-step window: each pedestrian holds a base velocity
/// with small per-step jitter.
fn random_window(rng: &mut ChaCha12Rng, id: u64, n: usize) -> Window {
    let peds = (0..n)
        .map(|p| {
            let mut pos = [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)];
            let vel = [rng.gen_range(-0.35..0.35), rng.gen_range(-0.35..0.35)];
            let mut abs = vec![pos];
            for _ in 1..20 {
                pos[0] += vel[0] + rng.gen_range(-0.05..0.05);
                pos[1] += vel[1] + rng.gen_range(-0.05..0.05);
                abs.push(pos);
            }
            PedTrack { ped_id: p as i64 + 1, abs }
        })
        .collect();
    Window { id, dataset: "random".into(), obs_len: 8, pred_len: 12, peds }
}

/// Random well-formed labeling: groups of 2–3, remainder noise, with
/// ids renumbered consecutively by smallest member.
fn random_labels(rng: &mut ChaCha12Rng, n: usize) -> GroupLabels {
    let mut group = vec![NOISE; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut gid = 0i64;
    let mut i = 0;
    while i + 1 < order.len() {
        if rng.gen_bool(0.6) {
            let size = rng.gen_range(2..=3usize).min(order.len() - i);
            for k in 0..size {
                group[order[i + k]] = gid;
            }
            gid += 1;
            i += size;
        } else {
            i += 1;
        }
    }
    // Renumber by smallest member index.
    let mut remap = std::collections::BTreeMap::new();
    let mut next = 0i64;
    for g in group.iter_mut() {
        if *g == NOISE {
            continue;
        }
        let id = *remap.entry(*g).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        *g = id;
    }
    let source = group
        .iter()
        .map(|&g| if g == NOISE { LabelSource::Noise } else { LabelSource::Coherent })
        .collect();
    GroupLabels { group, source }
}

fn std_normal_row(rng: &mut ChaCha12Rng, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((1, d), |_| rng.sample::<f64, _>(StandardNormal))
}

// ── criterion 1: gradient oracle ────────────────────────────────────

/// Every one of the 22k parameter entries is checked by central finite
/// differences on one of 20 random scenes (entry e on scene e mod 20),
/// so the full parameter vector is covered while each scene stays cheap.
fn gradient_oracle() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xC0FE);
    let params = Params::init(17);

    struct Scene {
        window: Window,
        labels: GroupLabels,
        ego: usize,
        eps: Array2<f64>,
    }
    let scenes: Vec<Scene> = (0..20)
        .map(|k| {
            let n = 2 + (k % 5);
            let window = random_window(&mut rng, k as u64, n);
            let labels = random_labels(&mut rng, n);
            let ego = k % n;
            let eps = std_normal_row(&mut rng, LATENT_DIM);
            Scene { window, labels, ego, eps }
        })
        .collect();

    let analytic: Vec<Vec<Array2<f64>>> = scenes
        .iter()
        .map(|s| {
            forward(&params, &s.window, s.ego, &s.labels, &LatentMode::Sample(s.eps.clone()), 1.0)
                .param_grads()
        })
        .collect();

    let loss_on = |p: &Params, s: &Scene| -> f64 {
        forward(p, &s.window, s.ego, &s.labels, &LatentMode::Sample(s.eps.clone()), 1.0)
            .loss_value()
    };

    let h = 1e-5;
    let shapes: Vec<(usize, usize)> = params.tensors().iter().map(|(_, a)| a.dim()).collect();
    let mut worst = 0.0f64;
    let mut entry = 0usize;
    for (ti, &(rows, cols)) in shapes.iter().enumerate() {
        for r in 0..rows {
            for c in 0..cols {
                let si = entry % scenes.len();
                let scene = &scenes[si];
                let mut plus = params.clone();
                plus.tensors_mut()[ti].1[(r, c)] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[ti].1[(r, c)] -= h;
                let fd = (loss_on(&plus, scene) - loss_on(&minus, scene)) / (2.0 * h);
                let a = analytic[si][ti][(r, c)];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-5);
                if rel > 1e-4 {
                    let name = params.tensors()[ti].0;
                    return Verdict::Fail(format!(
                        "{name}[{r},{c}] scene {si}: analytic {a:.3e} vs finite difference {fd:.3e} (rel {rel:.2e})"
                    ));
                }
                worst = worst.max(rel);
                entry += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Verdict::Fail(format!("checked {entry} entries but took {secs:.0}s (budget 120s)"));
    }
    Verdict::Pass(format!(
        "{entry} parameter entries on 20 scenes, worst relative error {worst:.2e}, {secs:.1}s"
    ))
}

// ── criterion 2: clustering oracle equivalence ──────────────────────

/// Brute-force re-derivations of both labeling stages, written from the
/// documented definitions with different algorithms (selection by
/// counting, union-find components, queue-free DBSCAN rounds).
mod brute {
    use super::*;

    fn d2(a: [f64; 2], b: [f64; 2]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// j is in i's K-nearest at frame t iff fewer than k others are
    /// strictly closer under (distance, index) lexicographic order.
    fn knn_member(positions: &[Vec<[f64; 2]>], i: usize, j: usize, t: usize, k: usize) -> bool {
        let dj = d2(positions[i][t], positions[j][t]);
        let closer = (0..positions.len())
            .filter(|&l| l != i && l != j)
            .filter(|&l| {
                let dl = d2(positions[i][t], positions[l][t]);
                dl < dj || (dl == dj && l < j)
            })
            .count();
        closer < k
    }

    fn invariant(positions: &[Vec<[f64; 2]>], i: usize, j: usize, k: usize) -> bool {
        let frames = positions[i].len();
        (0..frames).all(|t| knn_member(positions, i, j, t, k))
    }

    fn correlation(a: &[Vec<[f64; 2]>], i: usize, j: usize) -> f64 {
        let steps = a[i].len() - 1;
        let mut sum = 0.0;
        for t in 0..steps {
            let va = [a[i][t + 1][0] - a[i][t][0], a[i][t + 1][1] - a[i][t][1]];
            let vb = [a[j][t + 1][0] - a[j][t][0], a[j][t + 1][1] - a[j][t][1]];
            let (na, nb) = ((va[0] * va[0] + va[1] * va[1]).sqrt(), (vb[0] * vb[0] + vb[1] * vb[1]).sqrt());
            if na > 0.0 && nb > 0.0 {
                sum += (va[0] * vb[0] + va[1] * vb[1]) / (na * nb);
            }
        }
        sum / steps as f64
    }

    pub fn coherent(positions: &[Vec<[f64; 2]>], p: &ClusteringParams) -> Vec<i64> {
        let n = positions.len();
        if n == 0 {
            return Vec::new();
        }
        let k = p.k_max.min(n - 1);
        // Union-find over coherent links.
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let r = find(parent, parent[x]);
                parent[x] = r;
            }
            parent[x]
        }
        let mut has_link = vec![false; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let neighbors = invariant(positions, i, j, k) || invariant(positions, j, i, k);
                if neighbors && correlation(positions, i, j) > p.lambda {
                    has_link[i] = true;
                    has_link[j] = true;
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        let mut labels = vec![NOISE; n];
        let mut next = 0i64;
        for i in 0..n {
            if !has_link[i] || labels[i] != NOISE {
                continue;
            }
            let root = find(&mut parent, i);
            for j in i..n {
                if has_link[j] && find(&mut parent, j) == root {
                    labels[j] = next;
                }
            }
            next += 1;
        }
        labels
    }

    fn heading_gap(a: &[Vec<[f64; 2]>], i: usize, j: usize) -> f64 {
        let steps = a[i].len() - 1;
        let (mut sum, mut count) = (0.0, 0usize);
        for t in 0..steps {
            let va = [a[i][t + 1][0] - a[i][t][0], a[i][t + 1][1] - a[i][t][1]];
            let vb = [a[j][t + 1][0] - a[j][t][0], a[j][t + 1][1] - a[j][t][1]];
            if (va[0] * va[0] + va[1] * va[1]).sqrt() > 0.0
                && (vb[0] * vb[0] + vb[1] * vb[1]).sqrt() > 0.0
            {
                let mut d = (va[1].atan2(va[0]) - vb[1].atan2(vb[0])).rem_euclid(TAU);
                if d > TAU / 2.0 {
                    d = TAU - d;
                }
                sum += d;
                count += 1;
            }
        }
        if count == 0 {
            f64::INFINITY
        } else {
            sum / count as f64
        }
    }

    fn neighborhood(positions: &[Vec<[f64; 2]>], i: usize, j: usize, p: &ClusteringParams) -> bool {
        if i == j {
            return true;
        }
        if heading_gap(positions, i, j) > p.theta {
            return false;
        }
        let f = positions[i].len();
        let mv = [
            positions[i][f - 1][0] - positions[i][0][0],
            positions[i][f - 1][1] - positions[i][0][1],
        ];
        let speed = (mv[0] * mv[0] + mv[1] * mv[1]).sqrt();
        if speed == 0.0 {
            return false;
        }
        let hd = [mv[0] / speed, mv[1] / speed];
        let off = [
            positions[j][f - 1][0] - positions[i][f - 1][0],
            positions[j][f - 1][1] - positions[i][f - 1][1],
        ];
        let lon = off[0] * hd[0] + off[1] * hd[1];
        let lat = off[0] * -hd[1] + off[1] * hd[0];
        lat.abs() <= p.s_lateral && lon.abs() <= p.s_longitudinal
    }

    pub fn dbscan(
        positions: &[Vec<[f64; 2]>],
        candidates: &[usize],
        p: &ClusteringParams,
        next_id: i64,
    ) -> Vec<(usize, i64)> {
        let m = candidates.len();
        let hood: Vec<Vec<usize>> = (0..m)
            .map(|s| {
                (0..m)
                    .filter(|&t| neighborhood(positions, candidates[s], candidates[t], p))
                    .collect()
            })
            .collect();
        let core: Vec<bool> = hood.iter().map(|h| h.len() >= p.min_pts).collect();
        let mut label = vec![NOISE; m];
        let mut next = next_id;
        for s in 0..m {
            if !core[s] || label[s] != NOISE {
                continue;
            }
            // Grow the cluster to a fixed point: every core in the
            // cluster pulls in its whole neighborhood.
            label[s] = next;
            loop {
                let mut changed = false;
                for t in 0..m {
                    if label[t] == next && core[t] {
                        for &u in &hood[t] {
                            if label[u] == NOISE {
                                label[u] = next;
                                changed = true;
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            next += 1;
        }
        candidates.iter().copied().zip(label).collect()
    }
}

/// Random labeling scene: straight walkers, companions with pauses,
/// random walkers, stationary pedestrians, and exact duplicates.
fn random_label_scene(rng: &mut ChaCha12Rng, frames: usize) -> Vec<Vec<[f64; 2]>> {
    let n = rng.gen_range(1..=6usize);
    let mut scene: Vec<Vec<[f64; 2]>> = Vec::with_capacity(n);
    for i in 0..n {
        let style = rng.gen_range(0..100u32);
        let track = if i > 0 && style < 5 {
            // Exact duplicate: exercises distance tie-breaking.
            scene[rng.gen_range(0..i)].clone()
        } else if i > 0 && style < 40 {
            // Companion of an earlier pedestrian, with random pauses.
            let j = rng.gen_range(0..i);
            let dx = rng.gen_range(-1.5..1.5);
            let dy = rng.gen_range(-1.5..1.5);
            let mut pos = [scene[j][0][0] + dx, scene[j][0][1] + dy];
            let mut track = vec![pos];
            for t in 1..frames {
                if rng.gen_bool(0.25) {
                    track.push(pos);
                    continue;
                }
                pos[0] += scene[j][t][0] - scene[j][t - 1][0];
                pos[1] += scene[j][t][1] - scene[j][t - 1][1];
                track.push(pos);
            }
            track
        } else if style < 55 {
            // Stationary.
            let p = [rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)];
            vec![p; frames]
        } else if style < 75 {
            // Random walk.
            let mut pos = [rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)];
            let mut track = vec![pos];
            for _ in 1..frames {
                pos[0] += rng.gen_range(-0.8..0.8);
                pos[1] += rng.gen_range(-0.8..0.8);
                track.push(pos);
            }
            track
        } else {
            // Straight line.
            let heading = rng.gen_range(0.0..TAU);
            let speed = rng.gen_range(0.0..1.2);
            let start = [rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)];
            (0..frames)
                .map(|t| {
                    [
                        start[0] + heading.cos() * speed * t as f64,
                        start[1] + heading.sin() * speed * t as f64,
                    ]
                })
                .collect()
        };
        scene.push(track);
    }
    scene
}

fn clustering_oracle() -> Verdict {
    let mut rng = ChaCha12Rng::seed_from_u64(0x5EED);
    for trial in 0..1000 {
        let params = if trial % 4 == 3 {
            ClusteringParams::for_dataset("univ")
        } else {
            ClusteringParams::default()
        };
        let scene = random_label_scene(&mut rng, params.label_frames);

        let mine = coherent_filter(&scene, &params);
        let expect = brute::coherent(&scene, &params);
        if mine != expect {
            return Verdict::Fail(format!(
                "coherent_filter trial {trial}: {mine:?} vs brute {expect:?}"
            ));
        }

        let candidates: Vec<usize> =
            (0..scene.len()).filter(|&i| mine[i] == NOISE).collect();
        let next_id = mine.iter().copied().max().unwrap_or(NOISE) + 1;
        let got = dbscan_refine(&scene, &candidates, &params, next_id);
        let expect = brute::dbscan(&scene, &candidates, &params, next_id);
        if got != expect {
            return Verdict::Fail(format!(
                "dbscan_refine trial {trial}: {got:?} vs brute {expect:?}"
            ));
        }
    }
    Verdict::Pass("1000 random windows: both stages equal the brute-force oracles exactly".into())
}

// ── criterion 3: graph invariants ───────────────────────────────────

fn graph_invariants() -> Verdict {
    let mut rng = ChaCha12Rng::seed_from_u64(0x6EA9);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=8usize);
        let labels = random_labels(&mut rng, n);
        let ego = rng.gen_range(0..n);
        let (a_intra, a_inter) = build_masked_adjacency(&labels, ego);

        for (name, a) in [("intra", &a_intra), ("inter", &a_inter)] {
            if a.iter().any(|x| !x.is_finite()) {
                return Verdict::Fail(format!("trial {trial}: {name} adjacency has a non-finite entry"));
            }
            for (i, row) in a.rows().into_iter().enumerate() {
                let s: f64 = row.sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Verdict::Fail(format!(
                        "trial {trial}: {name} row {i} sums to {s} (ego {ego}, groups {:?})",
                        labels.group
                    ));
                }
            }
        }

        // Permutation equivariance: relabeling pedestrians permutes
        // rows and columns and nothing else.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut group = vec![NOISE; n];
        let mut source = vec![LabelSource::Noise; n];
        for i in 0..n {
            group[perm[i]] = labels.group[i];
            source[perm[i]] = labels.source[i];
        }
        let permuted = GroupLabels { group, source };
        let (p_intra, p_inter) = build_masked_adjacency(&permuted, perm[ego]);
        for ((name, a), p) in
            [("intra", &a_intra), ("inter", &a_inter)].into_iter().zip([&p_intra, &p_inter])
        {
            for i in 0..n {
                for j in 0..n {
                    let delta = (a[(i, j)] - p[(perm[i], perm[j])]).abs();
                    if delta > 1e-10 {
                        return Verdict::Fail(format!(
                            "trial {trial}: {name} not permutation-equivariant at ({i},{j}): off by {delta:.2e}"
                        ));
                    }
                }
            }
        }

        // Zero-row fallback: a row with no selected columns must still
        // come back finite and stochastic.
        let mut sparse = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                if rng.gen_bool(0.3) {
                    sparse[(i, j)] = rng.gen_range(0.0..2.0);
                }
            }
        }
        let normalized = row_normalize(&sparse);
        if normalized.iter().any(|x| !x.is_finite()) {
            return Verdict::Fail(format!("trial {trial}: zero-row fallback produced a non-finite entry"));
        }
        for (i, row) in normalized.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-12 {
                return Verdict::Fail(format!("trial {trial}: normalized sparse row {i} sums to {s}"));
            }
        }
    }
    Verdict::Pass(
        "1000 labelings: row-stochastic to 1e-12, permutation-equivariant to 1e-10, fallback finite"
            .into(),
    )
}

// ── criterion 4: ego invariance ─────────────────────────────────────

fn ego_invariance() -> Verdict {
    let mut rng = ChaCha12Rng::seed_from_u64(0xE60);
    let params = Params::init(23);
    for trial in 0..20 {
        let n = rng.gen_range(2..=8usize);
        let window = random_window(&mut rng, trial, n);
        let labels = random_labels(&mut rng, n);
        let ego = rng.gen_range(0..n);

        let base = forward(&params, &window, ego, &labels, &LatentMode::Mean, 1.0);

        // Permute everyone; track the ego's new index.
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
        let relabeled = GroupLabels { group, source };
        let moved = forward(&params, &shuffled, perm[ego], &relabeled, &LatentMode::Mean, 1.0);

        let max_route_delta = base
            .v_intra_value()
            .iter()
            .zip(moved.v_intra_value().iter())
            .chain(base.v_inter_value().iter().zip(moved.v_inter_value().iter()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let max_pred_delta = base
            .pred_abs()
            .iter()
            .zip(moved.pred_abs().iter())
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0f64, f64::max);
        if max_route_delta > 1e-10 || max_pred_delta > 1e-10 {
            return Verdict::Fail(format!(
                "trial {trial}: permuting non-ego pedestrians moved routes by {max_route_delta:.2e}, prediction by {max_pred_delta:.2e}"
            ));
        }
    }
    Verdict::Pass("20 scenes: route features and mean-mode predictions shift ≤ 1e-10 under permutation".into())
}

// ── criterion 5: training smoke ─────────────────────────────────────

fn training_smoke() -> Verdict {
    let t0 = Instant::now();
    // Dense scenes (8-9 planted groups of 2-3) give the pinned
    // 200-epoch/batch-64 run enough optimizer steps to converge.
    let synth_cfg =
        SynthConfig { n_windows: 100, groups_min: 8, groups_max: 9, seed: 5, ..SynthConfig::default() };
    let (windows, planted) = generate(&synth_cfg);

    let clustering = ClusteringParams::default();
    let mut labelings = Vec::with_capacity(windows.len());
    for (w, expect) in windows.iter().zip(&planted) {
        let got = match label_window(w, &clustering) {
            Ok(l) => l,
            Err(e) => return Verdict::Fail(format!("labeling window {}: {e}", w.id)),
        };
        if got.group != expect.group {
            return Verdict::Fail(format!(
                "window {}: hybrid labeling {:?} does not recover the planted groups {:?}",
                w.id, got.group, expect.group
            ));
        }
        labelings.push(got);
    }

    let cfg = TrainConfig { beta_kl: 0.01, seed: 7, ..TrainConfig::default() };
    let result = match train(&windows, &labelings, Params::init(3), &cfg) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(format!("training failed: {e}")),
    };
    let first = result.epoch_mean_loss[0];
    let last = *result.epoch_mean_loss.last().unwrap();

    let report = match evaluate(&result.params, &windows, &labelings, 20, EvalMode::Sample, 1234) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(format!("evaluation failed: {e}")),
    };
    let secs = t0.elapsed().as_secs_f64();

    if secs >= 900.0 {
        return Verdict::Fail(format!("took {secs:.0}s (budget 900s)"));
    }
    if !(report.ade < 0.1) {
        return Verdict::Fail(format!(
            "mean best-of-20 ADE {:.4} m (need < 0.1); loss {first:.4} -> {last:.4}, {secs:.0}s",
            report.ade
        ));
    }
    if !(last < first / 10.0) {
        return Verdict::Fail(format!(
            "epoch loss only improved {first:.4} -> {last:.4} (need 10x); ADE {:.4}",
            report.ade
        ));
    }
    Verdict::Pass(format!(
        "best-of-20 ADE {:.4} m / FDE {:.4} m over {} examples; loss {first:.4} -> {last:.4} ({:.0}x); {secs:.0}s",
        report.ade,
        report.fde,
        report.n_examples,
        first / last
    ))
}

// ── criterion 6: metric unit suite ──────────────────────────────────

fn exhaustive_frechet(a: &[[f64; 2]], b: &[[f64; 2]], i: usize, j: usize) -> f64 {
    let d = ((a[i][0] - b[j][0]).powi(2) + (a[i][1] - b[j][1]).powi(2)).sqrt();
    if i == 0 && j == 0 {
        return d;
    }
    let mut best = f64::INFINITY;
    if i > 0 {
        best = best.min(exhaustive_frechet(a, b, i - 1, j));
    }
    if j > 0 {
        best = best.min(exhaustive_frechet(a, b, i, j - 1));
    }
    if i > 0 && j > 0 {
        best = best.min(exhaustive_frechet(a, b, i - 1, j - 1));
    }
    d.max(best)
}

fn metric_suite() -> Verdict {
    // Exact trivial cases.
    let gt: Vec<[f64; 2]> = (0..12).map(|t| [0.3 * t as f64, 1.0]).collect();
    if displacement_errors(&gt, &gt) != (0.0, 0.0) {
        return Verdict::Fail("perfect prediction did not score exactly (0, 0)".into());
    }
    let off: Vec<[f64; 2]> = gt.iter().map(|p| [p[0] + 1.0, p[1]]).collect();
    if displacement_errors(&off, &gt) != (1.0, 1.0) {
        return Verdict::Fail("unit-offset prediction did not score exactly (1, 1)".into());
    }
    let zeros = vec![[0.0, 0.0]; 12];
    let drift: Vec<[f64; 2]> = (1..=12).map(|t| [0.1 * t as f64, 0.0]).collect();
    let (ade, fde) = displacement_errors(&drift, &zeros);
    if (ade - 0.65).abs() > 1e-12 || (fde - 1.2).abs() > 1e-12 {
        return Verdict::Fail(format!("linear-drift case scored ({ade}, {fde}), expected (0.65, 1.2)"));
    }

    // Fréchet vs the exhaustive-coupling oracle.
    let mut rng = ChaCha12Rng::seed_from_u64(0xF2EC);
    let mut worst = 0.0f64;
    for trial in 0..500 {
        let len_a = rng.gen_range(1..=6usize);
        let len_b = rng.gen_range(1..=6usize);
        let track = |rng: &mut ChaCha12Rng, len: usize| -> Vec<[f64; 2]> {
            (0..len).map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]).collect()
        };
        let a = track(&mut rng, len_a);
        let b = track(&mut rng, len_b);
        let fast = discrete_frechet(&a, &b);
        let slow = exhaustive_frechet(&a, &b, a.len() - 1, b.len() - 1);
        let delta = (fast - slow).abs();
        if delta > 1e-12 {
            return Verdict::Fail(format!(
                "trial {trial}: dynamic program {fast} vs exhaustive couplings {slow}"
            ));
        }
        let sym = (discrete_frechet(&b, &a) - fast).abs();
        if sym > 1e-12 {
            return Verdict::Fail(format!("trial {trial}: asymmetric by {sym:.2e}"));
        }
        worst = worst.max(delta);
    }
    Verdict::Pass(format!(
        "trivial cases exact; 500 randomized trials match the coupling oracle (worst gap {worst:.1e})"
    ))
}

// ── criterion 7: real-data labeling reproduction ────────────────────

const DATA_DIR_VAR: &str = "COMOTION_DATA_DIR";
const DATASETS: [&str; 5] = ["eth", "hotel", "univ", "zara1", "zara2"];

fn real_data_reproduction() -> Verdict {
    let dir = match std::env::var_os(DATA_DIR_VAR) {
        Some(d) => PathBuf::from(d),
        None => {
            return Verdict::Skip(format!(
                "set {DATA_DIR_VAR} to a directory of <dataset>.txt files to run"
            ))
        }
    };
    let mut details = Vec::new();
    let mut cf_intra_sum = 0.0;
    let mut hybrid_intra_sum = 0.0;
    let mut compared = 0usize;

    for name in DATASETS {
        let path = dir.join(format!("{name}.txt"));
        if !path.exists() {
            return Verdict::Fail(format!("missing dataset file {}", path.display()));
        }
        let records = match parse_trajectory_file(&path, ColumnOrder::default()) {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(format!("{name}: {e}")),
        };
        let windows = comotion::data::extract_windows(&records, name, 8, 12, 1);
        if windows.is_empty() {
            return Verdict::Fail(format!("{name}: no complete windows extracted"));
        }
        let params = ClusteringParams::for_dataset(name);
        let stats = match labeling_stats(&windows, &params) {
            Ok(s) => s,
            Err(e) => return Verdict::Fail(format!("{name}: {e}")),
        };
        let reference = REFERENCE_LABELING_RATES
            .iter()
            .find(|(d, _, _)| *d == name)
            .map(|(_, _, h)| *h)
            .expect("reference rate");
        if (stats.hybrid_pct() - reference).abs() > 10.0 {
            return Verdict::Fail(format!(
                "{name}: hybrid labeling rate {:.1}% vs reference {reference:.1}% (±10pp)",
                stats.hybrid_pct()
            ));
        }
        if stats.hybrid_pct() <= stats.coherent_pct() {
            return Verdict::Fail(format!(
                "{name}: hybrid rate {:.1}% not above coherent-only rate {:.1}%",
                stats.hybrid_pct(),
                stats.coherent_pct()
            ));
        }

        // Group-similarity orderings under both labelings.
        let mut hybrid_labels = Vec::with_capacity(windows.len());
        let mut cf_labels = Vec::with_capacity(windows.len());
        for w in &windows {
            let l = match label_window(w, &params) {
                Ok(l) => l,
                Err(e) => return Verdict::Fail(format!("{name}: {e}")),
            };
            let from = w.obs_len - params.label_frames;
            let positions: Vec<Vec<[f64; 2]>> =
                w.peds.iter().map(|p| p.abs[from..w.obs_len].to_vec()).collect();
            let cf = coherent_filter(&positions, &params);
            let source = cf
                .iter()
                .map(|&g| if g == NOISE { LabelSource::Noise } else { LabelSource::Coherent })
                .collect();
            cf_labels.push(GroupLabels { group: cf, source });
            hybrid_labels.push(l);
        }
        let hybrid_sim = group_similarity(&windows, &hybrid_labels);
        let cf_sim = group_similarity(&windows, &cf_labels);
        if let (Some(intra), Some(inter)) = (hybrid_sim.intra, hybrid_sim.inter) {
            if intra >= inter {
                return Verdict::Fail(format!(
                    "{name}: hybrid intra {intra:.2} not below inter {inter:.2}"
                ));
            }
        }
        if let (Some(h), Some(c)) = (hybrid_sim.intra, cf_sim.intra) {
            hybrid_intra_sum += h;
            cf_intra_sum += c;
            compared += 1;
        }
        details.push(format!("{name} {:.1}%", stats.hybrid_pct()));
    }
    if compared > 0 && hybrid_intra_sum / compared as f64 > cf_intra_sum / compared as f64 {
        return Verdict::Fail(format!(
            "hybrid intra average {:.2} above coherent-only {:.2}",
            hybrid_intra_sum / compared as f64,
            cf_intra_sum / compared as f64
        ));
    }
    Verdict::Pass(format!("hybrid rates within ±10pp ({}); orderings hold", details.join(", ")))
}

// ── criterion 8: reference comparison ───────────────────────────────

fn reference_comparison() -> Verdict {
    // Full-scale reference results are reported for comparison only;
    // desk-scale runs make no claim of reproducing them.
    let avg = REFERENCE_ADE_FDE.iter().find(|(d, _, _)| *d == "avg").expect("avg row");
    Verdict::Pass(format!(
        "informational: full-scale reference ADE/FDE (e.g., AVG {:.2}/{:.2}) reported for comparison; gates rest on criteria 1-7",
        avg.1, avg.2
    ))
}

// ── sanity: the harness's own helpers ───────────────────────────────

#[test]
fn random_labels_are_well_formed() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    for _ in 0..200 {
        let n = rng.gen_range(1..=8usize);
        let l = random_labels(&mut rng, n);
        let ids: BTreeSet<i64> = l.group.iter().copied().filter(|&g| g != NOISE).collect();
        // Consecutive ids from zero, each group with at least two members.
        for (expect, got) in ids.iter().enumerate() {
            assert_eq!(expect as i64, *got);
        }
        for &g in &ids {
            assert!(l.group.iter().filter(|&&x| x == g).count() >= 2);
        }
        // Renumbered by smallest member: first non-noise pedestrian has group 0.
        if let Some(first) = l.group.iter().find(|&&g| g != NOISE) {
            assert_eq!(*first, 0);
        }
    }
}

#[test]
fn best_of_one_matches_a_single_manual_sample() {
    let (windows, labelings) = generate(&SynthConfig { n_windows: 1, seed: 2, ..SynthConfig::default() });
    let params = Params::init(8);
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let (ade, fde) =
        best_of_n(&params, &windows[0], 0, &labelings[0], 1, EvalMode::Sample, &mut rng).unwrap();

    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let eps = std_normal_row(&mut rng, LATENT_DIM);
    let f = forward(&params, &windows[0], 0, &labelings[0], &LatentMode::Sample(eps), 1.0);
    let manual = displacement_errors(&f.pred_abs(), windows[0].future(0));
    assert_eq!((ade, fde), manual);
}
