//! Trajectory ingestion: annotation parsing, sliding-window extraction,
//! relative-displacement encoding, leave-one-out splits, and a plain-text
//! window cache.
//!
//! Annotation files are whitespace-delimited rows of `frame ped x y`
//! (column order configurable). Frames are annotated at a fixed raw-frame
//! step (10 frames = 0.4 s for the standard corpora); windows are built
//! over *consecutive distinct annotated frames*, so an irregular gap in the
//! recording simply yields fewer windows rather than corrupt ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Steps a model observes before predicting.
pub const DEFAULT_OBS_LEN: usize = 8;
/// Steps a model must predict.
pub const DEFAULT_PRED_LEN: usize = 12;
/// Raw video frames between consecutive annotations in the standard corpora.
pub const DEFAULT_FRAME_STEP: i64 = 10;
/// Seconds between consecutive annotated frames.
pub const SECONDS_PER_STEP: f64 = 0.4;

/// One annotated observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub frame: i64,
    pub ped: i64,
    pub x: f64,
    pub y: f64,
}

/// Which whitespace-separated column holds which field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnOrder {
    pub frame: usize,
    pub ped: usize,
    pub x: usize,
    pub y: usize,
}

impl Default for ColumnOrder {
    fn default() -> Self {
        Self { frame: 0, ped: 1, x: 2, y: 3 }
    }
}

impl ColumnOrder {
    fn max_index(&self) -> usize {
        self.frame.max(self.ped).max(self.x).max(self.y)
    }
}

/// One pedestrian's positions over a full window (observed + future).
#[derive(Debug, Clone, PartialEq)]
pub struct PedTrack {
    pub ped_id: i64,
    /// World positions, one per window step.
    pub abs: Vec<[f64; 2]>,
}

impl PedTrack {
    /// Relative-displacement encoding: step 0 is (0, 0), step t is
    /// `abs[t] - abs[t-1]`.
    pub fn rel(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.abs.len());
        out.push([0.0, 0.0]);
        for t in 1..self.abs.len() {
            out.push([
                self.abs[t][0] - self.abs[t - 1][0],
                self.abs[t][1] - self.abs[t - 1][1],
            ]);
        }
        out
    }
}

/// Reconstruct absolute positions from a start point and displacements
/// (the inverse of [`PedTrack::rel`] given `abs[0]`).
pub fn rel_to_abs(start: [f64; 2], rel: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(rel.len());
    let mut cur = start;
    // rel[0] is the placeholder zero step for the start position itself.
    out.push(start);
    for d in &rel[1..] {
        cur = [cur[0] + d[0], cur[1] + d[1]];
        out.push(cur);
    }
    out
}

/// A scene: every pedestrian observed over the same span of annotated
/// frames, split into an observed prefix and a future suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Stable id, unique within one extraction run.
    pub id: u64,
    /// Corpus the window came from (e.g. "eth", "synth").
    pub dataset: String,
    pub obs_len: usize,
    pub pred_len: usize,
    /// Tracks sorted by ascending `ped_id`.
    pub peds: Vec<PedTrack>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.obs_len + self.pred_len
    }

    pub fn is_empty(&self) -> bool {
        self.peds.is_empty()
    }

    pub fn n_peds(&self) -> usize {
        self.peds.len()
    }

    /// Index of `ped_id` within `peds`. Panics when absent: callers pass
    /// ids they took from this window.
    pub fn ped_index(&self, ped_id: i64) -> usize {
        self.peds
            .iter()
            .position(|p| p.ped_id == ped_id)
            .unwrap_or_else(|| panic!("ped {ped_id} not in window {}", self.id))
    }

    /// Observed positions (first `obs_len` steps) of one track.
    pub fn obs(&self, idx: usize) -> &[[f64; 2]] {
        &self.peds[idx].abs[..self.obs_len]
    }

    /// Future positions (last `pred_len` steps) of one track.
    pub fn future(&self, idx: usize) -> &[[f64; 2]] {
        &self.peds[idx].abs[self.obs_len..]
    }
}

// ── parsing ─────────────────────────────────────────────────────────────

/// Read a whitespace-delimited annotation file. Blank lines and lines
/// starting with `#` are skipped. Frame and pedestrian ids may be written
/// as floats (`10.0`) but must be integral. Records come back sorted by
/// `(frame, ped)` regardless of file order.
pub fn parse_trajectory_file(path: &Path, cols: ColumnOrder) -> Result<Vec<TrajectoryRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen: BTreeMap<(i64, i64), usize> = BTreeMap::new();

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() <= cols.max_index() {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected at least {} columns, got {}", cols.max_index() + 1, fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, lineno, format!("bad number {:?}", fields[i])))
        };
        let int = |i: usize| -> Result<i64> {
            let v = num(i)?;
            if v.fract() != 0.0 || !v.is_finite() {
                return Err(Error::parse(path, lineno, format!("non-integral id {:?}", fields[i])));
            }
            Ok(v as i64)
        };
        let rec = TrajectoryRecord {
            frame: int(cols.frame)?,
            ped: int(cols.ped)?,
            x: num(cols.x)?,
            y: num(cols.y)?,
        };
        if seen.insert((rec.frame, rec.ped), lineno).is_some() {
            return Err(Error::DuplicateRecord {
                path: path.to_owned(),
                line: lineno,
                frame: rec.frame,
                ped: rec.ped,
            });
        }
        records.push(rec);
    }
    records.sort_by_key(|r| (r.frame, r.ped));
    Ok(records)
}

// ── window extraction ───────────────────────────────────────────────────

/// Slide a `obs_len + pred_len` window over the distinct annotated frames
/// (sorted ascending) with the given stride. A pedestrian joins a window
/// only when annotated at every one of its frames; windows with no such
/// pedestrian are dropped. Window ids are assigned sequentially from 0 in
/// slide order.
pub fn extract_windows(
    records: &[TrajectoryRecord],
    dataset: &str,
    obs_len: usize,
    pred_len: usize,
    stride: usize,
) -> Vec<Window> {
    assert!(obs_len >= 1 && pred_len >= 1, "window lengths must be positive");
    assert!(stride >= 1, "stride must be positive");
    let span = obs_len + pred_len;

    // frame -> ped -> position
    let mut by_frame: BTreeMap<i64, BTreeMap<i64, [f64; 2]>> = BTreeMap::new();
    for r in records {
        by_frame.entry(r.frame).or_default().insert(r.ped, [r.x, r.y]);
    }
    let frames: Vec<i64> = by_frame.keys().copied().collect();

    let mut windows = Vec::new();
    let mut next_id = 0u64;
    if frames.len() < span {
        return windows;
    }
    let mut start = 0usize;
    while start + span <= frames.len() {
        let slot = &frames[start..start + span];

        // Pedestrians present at the first frame, then narrowed per frame.
        let mut peds: Vec<i64> = by_frame[&slot[0]].keys().copied().collect();
        for f in &slot[1..] {
            let here = &by_frame[f];
            peds.retain(|p| here.contains_key(p));
            if peds.is_empty() {
                break;
            }
        }

        if !peds.is_empty() {
            let tracks = peds
                .iter()
                .map(|&ped_id| PedTrack {
                    ped_id,
                    abs: slot.iter().map(|f| by_frame[f][&ped_id]).collect(),
                })
                .collect();
            windows.push(Window {
                id: next_id,
                dataset: dataset.to_owned(),
                obs_len,
                pred_len,
                peds: tracks,
            });
            next_id += 1;
        }
        start += stride;
    }
    windows
}

// ── splits ──────────────────────────────────────────────────────────────

/// Leave-one-out partition over named corpora.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: String,
}

/// Train on every corpus except `held_out`, test on `held_out`. The order
/// of `datasets` is preserved in `train`. Errors when `held_out` is not
/// one of `datasets`.
pub fn leave_one_out(datasets: &[String], held_out: &str) -> Result<Split> {
    if !datasets.iter().any(|d| d == held_out) {
        return Err(Error::Config(format!(
            "held-out dataset {held_out:?} is not among {datasets:?}"
        )));
    }
    Ok(Split {
        train: datasets.iter().filter(|d| *d != held_out).cloned().collect(),
        test: held_out.to_owned(),
    })
}

/// Partition windows into `(train, test)` by their `dataset` tag; test
/// windows are exactly those tagged `held_out`. Errors when no window
/// carries the held-out tag. An empty training side is legal (the caller
/// should warn) so single-corpus experiments still run.
pub fn split_windows(windows: &[Window], held_out: &str) -> Result<(Vec<Window>, Vec<Window>)> {
    let (test, train): (Vec<Window>, Vec<Window>) =
        windows.iter().cloned().partition(|w| w.dataset == held_out);
    if test.is_empty() {
        return Err(Error::Config(format!("no windows tagged with held-out dataset {held_out:?}")));
    }
    Ok((train, test))
}

// ── window cache ────────────────────────────────────────────────────────

const WINDOW_MAGIC: &str = "comotion-windows v1";

/// Serialize windows to the plain-text cache format. Floats are written
/// with Rust's shortest round-trip formatting, so a save/load cycle is
/// bit-exact.
pub fn save_windows(path: &Path, windows: &[Window]) -> Result<()> {
    let mut out = String::new();
    out.push_str(WINDOW_MAGIC);
    out.push('\n');
    for w in windows {
        writeln!(out, "window {} {} {} {} {}", w.id, w.dataset, w.obs_len, w.pred_len, w.n_peds())
            .expect("string write");
        for p in &w.peds {
            assert_eq!(p.abs.len(), w.len(), "track length mismatch in window {}", w.id);
            let mut line = p.ped_id.to_string();
            for pos in &p.abs {
                write!(line, " {} {}", pos[0], pos[1]).expect("string write");
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a window cache written by [`save_windows`].
pub fn load_windows(path: &Path) -> Result<Vec<Window>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, magic) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty window cache"))?;
    if magic.trim() != WINDOW_MAGIC {
        return Err(Error::parse(path, 1, format!("bad header {magic:?}")));
    }

    let mut windows = Vec::new();
    while let Some((idx, line)) = lines.next() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "window" {
            return Err(Error::parse(path, lineno, format!("expected window header, got {line:?}")));
        }
        let id: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad window id {:?}", fields[1])))?;
        let dataset = fields[2].to_owned();
        let parse_usize = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad length field {s:?}")))
        };
        let obs_len = parse_usize(fields[3])?;
        let pred_len = parse_usize(fields[4])?;
        let n = parse_usize(fields[5])?;
        let span = obs_len + pred_len;

        let mut peds = Vec::with_capacity(n);
        for _ in 0..n {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, lineno, format!("window {id} truncated")))?;
            let lineno = idx + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 1 + 2 * span {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {} fields for a {span}-step track, got {}", 1 + 2 * span, fields.len()),
                ));
            }
            let ped_id: i64 = fields[0]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad ped id {:?}", fields[0])))?;
            let mut abs = Vec::with_capacity(span);
            for t in 0..span {
                let fx = fields[1 + 2 * t];
                let fy = fields[2 + 2 * t];
                let x: f64 = fx
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, format!("bad coordinate {fx:?}")))?;
                let y: f64 = fy
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, format!("bad coordinate {fy:?}")))?;
                abs.push([x, y]);
            }
            peds.push(PedTrack { ped_id, abs });
        }
        windows.push(Window { id, dataset, obs_len, pred_len, peds });
    }
    Ok(windows)
}
