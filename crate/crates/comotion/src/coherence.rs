//! Coherent-motion group labeling.
//!
//! Two stages over the tail of the observed trajectory:
//!
//! 1. **Coherent filtering** — pairs are linked when they stay in each
//!    other's invariant K-nearest-neighbor sets across every labeling frame
//!    and their time-averaged velocity correlation clears a threshold;
//!    connected components of the link graph become groups.
//! 2. **Density refinement** — pedestrians the first stage left ungrouped
//!    are re-clustered with a DBSCAN whose neighborhood predicate combines
//!    time-averaged heading difference with lateral/longitudinal offsets
//!    in the ego's heading frame. This recovers members whose velocity
//!    correlation was diluted by pauses or speed changes.
//!
//! Group ids are consecutive from 0, ordered by each group's smallest
//! member index; ungrouped pedestrians carry [`NOISE`]. All iteration is in
//! ascending index order, so labeling is deterministic.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::Window;
use crate::{Error, Result};

/// Group id of an ungrouped pedestrian.
pub const NOISE: i64 = -1;

/// Which stage produced a pedestrian's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Grouped by coherent filtering.
    Coherent,
    /// Grouped by the density refinement stage.
    Density,
    /// Left ungrouped by both stages.
    Noise,
}

/// Per-pedestrian group assignment for one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLabels {
    /// Group id per pedestrian index, [`NOISE`] when ungrouped.
    pub group: Vec<i64>,
    pub source: Vec<LabelSource>,
}

impl GroupLabels {
    pub fn n_peds(&self) -> usize {
        self.group.len()
    }

    /// Number of distinct groups (noise excluded).
    pub fn n_groups(&self) -> usize {
        self.group.iter().filter(|&&g| g != NOISE).max().map_or(0, |&g| g as usize + 1)
    }

    /// Indices sharing pedestrian `i`'s group, `i` included. A noise
    /// pedestrian is its own singleton group.
    pub fn members_of(&self, i: usize) -> Vec<usize> {
        if self.group[i] == NOISE {
            return vec![i];
        }
        (0..self.group.len()).filter(|&j| self.group[j] == self.group[i]).collect()
    }

    /// Indices assigned to group `g`; empty for [`NOISE`].
    pub fn members_of_group(&self, g: i64) -> Vec<usize> {
        if g == NOISE {
            return Vec::new();
        }
        (0..self.group.len()).filter(|&j| self.group[j] == g).collect()
    }
}

/// Thresholds controlling both labeling stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringParams {
    /// Number of trailing observed frames the labeling looks at.
    pub label_frames: usize,
    /// Cap on the per-frame nearest-neighbor count (the effective K is
    /// `min(k_max, N - 1)`).
    pub k_max: usize,
    /// Minimum time-averaged velocity correlation for a coherent link.
    pub lambda: f64,
    /// Maximum time-averaged heading difference (radians) for density
    /// neighborhood membership.
    pub theta: f64,
    /// Maximum |lateral offset| (m) in the ego's heading frame.
    pub s_lateral: f64,
    /// Maximum |longitudinal offset| (m) in the ego's heading frame.
    pub s_longitudinal: f64,
    /// Minimum neighborhood size (self included) for a density core point.
    pub min_pts: usize,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        Self {
            label_frames: 5,
            k_max: 5,
            lambda: 0.8,
            theta: 0.5,
            s_lateral: 2.0,
            s_longitudinal: 5.0,
            min_pts: 2,
        }
    }
}

impl ClusteringParams {
    /// Tuned thresholds per corpus. The university corpus is denser and
    /// slower-moving, so it watches a longer tail with a tighter heading
    /// tolerance; every other corpus (and unknown names) uses the default.
    pub fn for_dataset(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "univ" => Self { label_frames: 8, theta: 0.2, ..Self::default() },
            _ => Self::default(),
        }
    }
}

// ── geometry helpers ────────────────────────────────────────────────────

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: [f64; 2]) -> f64 {
    dot(a, a).sqrt()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm(sub(a, b))
}

/// Per-step velocities of one track (length F-1 for F frames).
fn velocities(track: &[[f64; 2]]) -> Vec<[f64; 2]> {
    track.windows(2).map(|w| sub(w[1], w[0])).collect()
}

/// Wrap an angle difference into [0, pi].
fn angle_gap(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(std::f64::consts::TAU);
    if d > std::f64::consts::PI {
        d = std::f64::consts::TAU - d;
    }
    d
}

fn assert_positions(positions: &[Vec<[f64; 2]>]) {
    let f = positions.first().map_or(0, Vec::len);
    assert!(
        positions.iter().all(|p| p.len() == f),
        "all tracks must span the same labeling frames"
    );
    assert!(positions.is_empty() || f >= 2, "labeling needs at least two frames");
}

// ── coherent filtering ──────────────────────────────────────────────────

/// Per-pedestrian invariant neighbor sets: the intersection over all
/// labeling frames of the K-nearest-neighbor set at each frame, with
/// `K = min(k_max, N - 1)`. Distance ties break toward the lower index.
pub fn invariant_neighbors(positions: &[Vec<[f64; 2]>], k_max: usize) -> Vec<BTreeSet<usize>> {
    assert_positions(positions);
    let n = positions.len();
    if n == 0 {
        return Vec::new();
    }
    let frames = positions[0].len();
    let k = k_max.min(n - 1);

    let mut invariant: Vec<BTreeSet<usize>> = vec![(0..n).collect(); n];
    for inv in invariant.iter_mut() {
        // A pedestrian is never its own neighbor.
        // (Removed lazily below via the per-frame sets, which exclude self.)
        inv.clear();
    }

    for (i, inv) in invariant.iter_mut().enumerate() {
        let mut first = true;
        for t in 0..frames {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                let da = dist(positions[i][t], positions[a][t]);
                let db = dist(positions[i][t], positions[b][t]);
                da.partial_cmp(&db).expect("finite distances").then(a.cmp(&b))
            });
            let frame_set: BTreeSet<usize> = others.into_iter().take(k).collect();
            if first {
                *inv = frame_set;
                first = false;
            } else {
                *inv = inv.intersection(&frame_set).copied().collect();
            }
            if inv.is_empty() {
                break;
            }
        }
    }
    invariant
}

/// Time-averaged velocity correlation: the mean over steps of the cosine
/// between the two per-step velocities. A step where either pedestrian is
/// stationary contributes zero (it is averaged in, not skipped), so pauses
/// dilute the correlation.
pub fn velocity_correlation(track_a: &[[f64; 2]], track_b: &[[f64; 2]]) -> f64 {
    assert_eq!(track_a.len(), track_b.len(), "correlation needs equal-length tracks");
    assert!(track_a.len() >= 2, "correlation needs at least one step");
    let va = velocities(track_a);
    let vb = velocities(track_b);
    let mut sum = 0.0;
    for (a, b) in va.iter().zip(&vb) {
        let (na, nb) = (norm(*a), norm(*b));
        if na > 0.0 && nb > 0.0 {
            sum += dot(*a, *b) / (na * nb);
        }
    }
    sum / va.len() as f64
}

/// First labeling stage. Pedestrians `i`, `j` are linked when at least one
/// holds the other in its invariant neighbor set *and* their velocity
/// correlation exceeds `lambda`; groups are the connected components with
/// two or more members, numbered by smallest member index.
pub fn coherent_filter(positions: &[Vec<[f64; 2]>], params: &ClusteringParams) -> Vec<i64> {
    assert_positions(positions);
    let n = positions.len();
    let invariant = invariant_neighbors(positions, params.k_max);

    let mut linked = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mutual = invariant[i].contains(&j) || invariant[j].contains(&i);
            if mutual && velocity_correlation(&positions[i], &positions[j]) > params.lambda {
                linked[i].push(j);
                linked[j].push(i);
            }
        }
    }
    components_to_labels(n, &linked)
}

/// Connected components over an adjacency list; singleton components map
/// to [`NOISE`], the rest get consecutive ids by smallest member.
fn components_to_labels(n: usize, linked: &[Vec<usize>]) -> Vec<i64> {
    let mut labels = vec![NOISE; n];
    let mut next = 0i64;
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] || linked[start].is_empty() {
            continue;
        }
        let mut stack = vec![start];
        let mut members = Vec::new();
        seen[start] = true;
        while let Some(i) = stack.pop() {
            members.push(i);
            for &j in &linked[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        for &m in &members {
            labels[m] = next;
        }
        next += 1;
    }
    labels
}

// ── density refinement ──────────────────────────────────────────────────

/// Time-averaged absolute heading difference between two tracks, counting
/// only steps where both are moving. Returns `f64::INFINITY` when no step
/// qualifies, which fails any threshold.
fn mean_heading_gap(track_a: &[[f64; 2]], track_b: &[[f64; 2]]) -> f64 {
    let va = velocities(track_a);
    let vb = velocities(track_b);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, b) in va.iter().zip(&vb) {
        if norm(*a) > 0.0 && norm(*b) > 0.0 {
            sum += angle_gap(a[1].atan2(a[0]), b[1].atan2(b[0]));
            count += 1;
        }
    }
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

/// Whether `j` lies in `i`'s density neighborhood: heading gap within
/// `theta`, and the final-frame offset of `j`, expressed in `i`'s heading
/// frame, within the lateral/longitudinal bounds. A stationary ego has no
/// heading frame, so its neighborhood is empty (except itself).
fn in_density_neighborhood(
    positions: &[Vec<[f64; 2]>],
    i: usize,
    j: usize,
    params: &ClusteringParams,
) -> bool {
    if i == j {
        return true;
    }
    if mean_heading_gap(&positions[i], &positions[j]) > params.theta {
        return false;
    }
    let track = &positions[i];
    let f = track.len();
    // Mean velocity telescopes to (last - first) / steps.
    let mean_v = sub(track[f - 1], track[0]);
    let speed = norm(mean_v);
    if speed == 0.0 {
        return false;
    }
    let heading = [mean_v[0] / speed, mean_v[1] / speed];
    let offset = sub(positions[j][f - 1], positions[i][f - 1]);
    let longitudinal = dot(offset, heading);
    let lateral = dot(offset, [-heading[1], heading[0]]);
    lateral.abs() <= params.s_lateral && longitudinal.abs() <= params.s_longitudinal
}

/// Second labeling stage: DBSCAN over the `candidates` subset with the
/// heading/offset neighborhood. Core points need `min_pts` neighbors
/// counting themselves; border points join the first core that reaches
/// them. Cluster ids start at `next_id`. Returns per-(global-index)
/// assignments for the candidates only.
pub fn dbscan_refine(
    positions: &[Vec<[f64; 2]>],
    candidates: &[usize],
    params: &ClusteringParams,
    next_id: i64,
) -> Vec<(usize, i64)> {
    assert_positions(positions);
    let set: Vec<usize> = candidates.to_vec();
    let neighborhoods: Vec<Vec<usize>> = set
        .iter()
        .map(|&i| {
            set.iter()
                .copied()
                .filter(|&j| in_density_neighborhood(positions, i, j, params))
                .collect()
        })
        .collect();
    let pos_in_set = |g: usize| set.iter().position(|&s| s == g).expect("candidate index");

    let mut label = vec![NOISE; set.len()];
    let mut visited = vec![false; set.len()];
    let mut next = next_id;
    for s in 0..set.len() {
        if visited[s] {
            continue;
        }
        visited[s] = true;
        if neighborhoods[s].len() < params.min_pts {
            continue; // not a core; may still be claimed as a border point
        }
        label[s] = next;
        let mut queue: Vec<usize> = neighborhoods[s].iter().map(|&g| pos_in_set(g)).collect();
        let mut qi = 0;
        while qi < queue.len() {
            let t = queue[qi];
            qi += 1;
            if label[t] == NOISE {
                label[t] = next;
            }
            if !visited[t] {
                visited[t] = true;
                if neighborhoods[t].len() >= params.min_pts {
                    queue.extend(neighborhoods[t].iter().map(|&g| pos_in_set(g)));
                }
            }
        }
        next += 1;
    }
    set.into_iter().zip(label).collect()
}

// ── hybrid labeling ─────────────────────────────────────────────────────

/// Run both stages and merge: coherent groups keep their members, density
/// refinement clusters whoever was left, and the combined group ids are
/// renumbered consecutively by smallest member index.
pub fn hybrid_label(positions: &[Vec<[f64; 2]>], params: &ClusteringParams) -> GroupLabels {
    assert_positions(positions);
    let n = positions.len();
    let cf = coherent_filter(positions, params);
    let mut group = cf.clone();
    let mut source: Vec<LabelSource> = cf
        .iter()
        .map(|&g| if g == NOISE { LabelSource::Noise } else { LabelSource::Coherent })
        .collect();

    let unlabeled: Vec<usize> = (0..n).filter(|&i| cf[i] == NOISE).collect();
    let next_id = cf.iter().copied().max().map_or(0, |m| m + 1).max(0);
    for (i, g) in dbscan_refine(positions, &unlabeled, params, next_id) {
        if g != NOISE {
            group[i] = g;
            source[i] = LabelSource::Density;
        }
    }

    renumber_by_smallest_member(&mut group);
    GroupLabels { group, source }
}

/// Canonicalize group ids: consecutive from 0, ordered by each group's
/// smallest member index. Noise entries are untouched.
fn renumber_by_smallest_member(group: &mut [i64]) {
    let mut mapping: Vec<(i64, i64)> = Vec::new(); // (old, new) in first-seen order
    let mut next = 0i64;
    for g in group.iter_mut() {
        if *g == NOISE {
            continue;
        }
        let new = match mapping.iter().find(|(old, _)| old == g) {
            Some(&(_, new)) => new,
            None => {
                mapping.push((*g, next));
                next += 1;
                next - 1
            }
        };
        *g = new;
    }
}

/// Slice the labeling span out of a window (the last `label_frames`
/// observed steps — never the future) and label it. A window whose
/// observation is shorter than the labeling span is a configuration error.
pub fn label_window(window: &Window, params: &ClusteringParams) -> crate::Result<GroupLabels> {
    if params.label_frames < 3 {
        return Err(crate::Error::Config(format!(
            "label_frames must be >= 3, got {}",
            params.label_frames
        )));
    }
    if window.obs_len < params.label_frames {
        return Err(crate::Error::Config(format!(
            "window {} observes {} steps but labeling needs {}",
            window.id, window.obs_len, params.label_frames
        )));
    }
    let f = params.label_frames;
    let positions: Vec<Vec<[f64; 2]>> = window
        .peds
        .iter()
        .map(|p| p.abs[window.obs_len - f..window.obs_len].to_vec())
        .collect();
    Ok(hybrid_label(&positions, params))
}

// ── corpus statistics ───────────────────────────────────────────────────

/// How many pedestrian slots each stage manages to group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelingStats {
    pub total: usize,
    /// Grouped by coherent filtering alone.
    pub coherent: usize,
    /// Grouped after density refinement (coherent members included).
    pub hybrid: usize,
}

impl LabelingStats {
    pub fn coherent_pct(&self) -> f64 {
        percent(self.coherent, self.total)
    }

    pub fn hybrid_pct(&self) -> f64 {
        percent(self.hybrid, self.total)
    }
}

fn percent(part: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * part as f64 / total as f64
    }
}

/// Label every window and tally how many pedestrian slots each stage
/// grouped. One pedestrian appearing in several windows counts once per
/// window, matching how the labels are consumed downstream.
pub fn labeling_stats(windows: &[Window], params: &ClusteringParams) -> crate::Result<LabelingStats> {
    let mut stats = LabelingStats::default();
    for w in windows {
        let labels = label_window(w, params)?;
        stats.total += labels.n_peds();
        for (g, s) in labels.group.iter().zip(&labels.source) {
            if *g != NOISE {
                stats.hybrid += 1;
                if *s == LabelSource::Coherent {
                    stats.coherent += 1;
                }
            }
        }
    }
    Ok(stats)
}

// ── label files ─────────────────────────────────────────────────────────

/// First line of a label file; bump the version on format changes.
pub const LABELS_MAGIC: &str = "comotion-labels v1";

impl LabelSource {
    fn as_str(self) -> &'static str {
        match self {
            LabelSource::Coherent => "coherent",
            LabelSource::Density => "density",
            LabelSource::Noise => "noise",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "coherent" => Some(LabelSource::Coherent),
            "density" => Some(LabelSource::Density),
            "noise" => Some(LabelSource::Noise),
            _ => None,
        }
    }
}

/// Write one labeling per window: a `window <id> <n_peds>` header followed
/// by `<ped_id> <group|-1> <coherent|density|noise>` rows. The pedestrian
/// ids give each row provenance independent of index order.
pub fn save_labels(path: &Path, windows: &[Window], labelings: &[GroupLabels]) -> Result<()> {
    if windows.len() != labelings.len() {
        return Err(Error::Config(format!(
            "{} windows but {} labelings",
            windows.len(),
            labelings.len()
        )));
    }
    let mut out = String::new();
    out.push_str(LABELS_MAGIC);
    out.push('\n');
    for (w, l) in windows.iter().zip(labelings) {
        assert_eq!(w.n_peds(), l.n_peds(), "labeling does not match window {}", w.id);
        writeln!(out, "window {} {}", w.id, w.n_peds()).expect("string write");
        for (p, (g, s)) in w.peds.iter().zip(l.group.iter().zip(&l.source)) {
            writeln!(out, "{} {} {}", p.ped_id, g, s.as_str()).expect("string write");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a label file back as `(window_id, labeling)` pairs in file order.
pub fn load_labels(path: &Path) -> Result<Vec<(u64, GroupLabels)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, magic) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty label file"))?;
    if magic != LABELS_MAGIC {
        return Err(Error::parse(path, 1, format!("expected `{LABELS_MAGIC}`, got `{magic}`")));
    }

    let mut out = Vec::new();
    let mut lines = lines.filter(|(_, l)| !l.is_empty());
    while let Some((lineno, line)) = lines.next() {
        let mut f = line.split_whitespace();
        let bad = |lineno: usize, msg: String| Error::parse(path, lineno, msg);
        if f.next() != Some("window") {
            return Err(bad(lineno, format!("expected `window <id> <n_peds>`, got `{line}`")));
        }
        let id: u64 = f
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(lineno, "bad window id".into()))?;
        let n: usize = f
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(lineno, "bad pedestrian count".into()))?;
        if f.next().is_some() {
            return Err(bad(lineno, "trailing fields after window header".into()));
        }

        let mut group = Vec::with_capacity(n);
        let mut source = Vec::with_capacity(n);
        for _ in 0..n {
            let (lineno, row) = lines
                .next()
                .ok_or_else(|| Error::parse(path, lineno, format!("window {id} truncated")))?;
            let mut f = row.split_whitespace();
            let _ped: i64 = f
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(lineno, "bad pedestrian id".into()))?;
            let g: i64 = f
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(lineno, "bad group id".into()))?;
            if g < NOISE {
                return Err(bad(lineno, format!("group id {g} out of range")));
            }
            let s = f
                .next()
                .and_then(LabelSource::parse)
                .ok_or_else(|| bad(lineno, "bad label source".into()))?;
            if f.next().is_some() {
                return Err(bad(lineno, "trailing fields after label row".into()));
            }
            group.push(g);
            source.push(s);
        }
        out.push((id, GroupLabels { group, source }));
    }
    Ok(out)
}

/// Match loaded labelings to a window slice by id, in window order. Every
/// window must have exactly one labeling with the right pedestrian count.
pub fn align_labels(windows: &[Window], loaded: &[(u64, GroupLabels)]) -> Result<Vec<GroupLabels>> {
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        let mut found = loaded.iter().filter(|(id, _)| *id == w.id).map(|(_, l)| l);
        let l = found
            .next()
            .ok_or_else(|| Error::Config(format!("no labeling for window {}", w.id)))?;
        if found.next().is_some() {
            return Err(Error::Config(format!("duplicate labelings for window {}", w.id)));
        }
        if l.n_peds() != w.n_peds() {
            return Err(Error::Config(format!(
                "window {} has {} pedestrians but its labeling covers {}",
                w.id,
                w.n_peds(),
                l.n_peds()
            )));
        }
        out.push(l.clone());
    }
    Ok(out)
}
