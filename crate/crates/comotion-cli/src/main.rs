//! Batch entry points for the trajectory-forecasting pipeline.
//!
//! Subcommands cover the full workflow: `ingest` caches prediction
//! windows from raw annotations, `label` writes hybrid group labels,
//! `label-stats` and `frechet-report` summarize the labeling, `train`
//! fits a checkpoint, `eval` scores it, `plot-data` dumps per-window
//! trajectories as tabular text, and `selftest` runs the built-in
//! gradient and invariant checks. Every command is deterministic for a
//! fixed seed: identical inputs produce byte-identical outputs.

mod config;
mod selftest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use comotion::coherence::{
    align_labels, label_window, labeling_stats, load_labels, save_labels, GroupLabels,
    LabelSource, NOISE,
};
use comotion::data::{
    extract_windows, load_windows, parse_trajectory_file, save_windows, ColumnOrder, Window,
};
use comotion::eval::{
    evaluate, group_similarity_report, EvalMode, GroupSimilarity, REFERENCE_ADE_FDE,
    REFERENCE_GROUP_SIMILARITY, REFERENCE_LABELING_RATES,
};
use comotion::net::{
    forward, load_checkpoint, save_checkpoint, train, LatentMode, Params, LATENT_DIM,
};

use config::{pick, Config};

#[derive(Parser)]
#[command(name = "comotion", version, about = "Coherent-motion trajectory forecasting pipeline")]
struct Cli {
    /// TOML configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw annotations into a window cache.
    Ingest(IngestArgs),
    /// Label a window cache with hybrid coherent-motion groups.
    Label(LabelArgs),
    /// Report what fraction of pedestrians each labeling stage groups.
    LabelStats(LabelStatsArgs),
    /// Train a checkpoint on a window cache and its labels.
    Train(TrainArgs),
    /// Score a checkpoint (ADE/FDE, best-of-N) against ground truth.
    Eval(EvalArgs),
    /// Report intra- vs inter-group trajectory similarity per dataset.
    FrechetReport(FrechetReportArgs),
    /// Dump observed/ground-truth/predicted trajectories as text tables.
    PlotData(PlotDataArgs),
    /// Run the built-in gradient and invariant checks.
    Selftest,
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset name (also the default input stem: <data-dir>/<name>.txt).
    #[arg(long)]
    dataset: String,
    /// Annotation file; defaults to <data-dir>/<dataset>.txt.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory of annotation files (else config / environment).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    obs_len: Option<usize>,
    #[arg(long)]
    pred_len: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Output cache; defaults to <output-dir>/<dataset>.windows.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusteringFlags {
    #[arg(long)]
    label_frames: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    s_lateral: Option<f64>,
    #[arg(long)]
    s_longitudinal: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
}

impl ClusteringFlags {
    fn overrides(&self) -> config::ClusteringOverrides {
        config::ClusteringOverrides {
            label_frames: self.label_frames,
            k_max: self.k_max,
            lambda: self.lambda,
            theta: self.theta,
            s_lateral: self.s_lateral,
            s_longitudinal: self.s_longitudinal,
            min_pts: self.min_pts,
        }
    }
}

#[derive(Args)]
struct LabelArgs {
    /// Window cache produced by `ingest`.
    #[arg(long)]
    windows: PathBuf,
    /// Output label file; defaults to <output-dir>/<cache-stem>.labels.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    clustering: ClusteringFlags,
}

#[derive(Args)]
struct LabelStatsArgs {
    #[arg(long)]
    windows: PathBuf,
    #[command(flatten)]
    clustering: ClusteringFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    windows: PathBuf,
    /// Label file produced by `label`.
    #[arg(long)]
    labels: PathBuf,
    /// Output checkpoint; defaults to <output-dir>/model.ckpt.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch mean loss table; defaults to <output-dir>/loss.txt.
    #[arg(long)]
    loss_curve: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    beta_kl: Option<f64>,
    /// Keep the best of this many latent draws per example while training.
    #[arg(long)]
    variety_k: Option<usize>,
    /// Seed for initialization, shuffling, and latent sampling.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    windows: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Samples per pedestrian for best-of-N scoring.
    #[arg(long)]
    samples: Option<usize>,
    /// `sample` (stochastic best-of-N) or `mean` (deterministic).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FrechetReportArgs {
    #[arg(long)]
    windows: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Args)]
struct PlotDataArgs {
    #[arg(long)]
    windows: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Only this window id (default: every window).
    #[arg(long)]
    window_id: Option<u64>,
    /// Stochastic decodings to dump per pedestrian besides the mean.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Label(a) => label(&cfg, a),
        Command::LabelStats(a) => label_stats(&cfg, a),
        Command::Train(a) => train_cmd(&cfg, a),
        Command::Eval(a) => eval_cmd(&cfg, a),
        Command::FrechetReport(a) => frechet_report(&cfg, a),
        Command::PlotData(a) => plot_data(&cfg, a),
        Command::Selftest => selftest::run(),
    }
}

/// Resolve an output path under the configured output directory,
/// creating the directory when the default is used.
fn out_path(cfg: &Config, flag: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    let path = match flag {
        Some(p) => p,
        None => cfg.output_dir().join(name),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
    }
    Ok(path)
}

// ── ingest ──────────────────────────────────────────────────────────

fn ingest(cfg: &Config, a: IngestArgs) -> Result<()> {
    let input = match a.input {
        Some(p) => p,
        None => {
            let dir = match a.data_dir {
                Some(d) => d,
                None => cfg.data_dir()?,
            };
            dir.join(format!("{}.txt", a.dataset))
        }
    };
    let obs_len = pick(a.obs_len, cfg.obs_len, 8);
    let pred_len = pick(a.pred_len, cfg.pred_len, 12);
    let stride = pick(a.stride, cfg.stride, 1);
    if obs_len == 0 || pred_len == 0 || stride == 0 {
        bail!("obs-len, pred-len, and stride must all be positive");
    }

    let records = parse_trajectory_file(&input, ColumnOrder::default())?;
    let windows = extract_windows(&records, &a.dataset, obs_len, pred_len, stride);
    if windows.is_empty() {
        bail!(
            "{}: no pedestrian spans {} consecutive frames; nothing to cache",
            input.display(),
            obs_len + pred_len
        );
    }
    let out = out_path(cfg, a.out, &format!("{}.windows", a.dataset))?;
    save_windows(&out, &windows)?;
    let peds: usize = windows.iter().map(Window::n_peds).sum();
    println!(
        "{}: {} records -> {} windows ({} pedestrian slots) -> {}",
        input.display(),
        records.len(),
        windows.len(),
        peds,
        out.display()
    );
    Ok(())
}

// ── label ───────────────────────────────────────────────────────────

/// Thresholds for one cache: the library/config/flag stack, resolved
/// against the dataset name the windows carry.
fn clustering_for(cfg: &Config, windows: &[Window], flags: &ClusteringFlags) -> Result<comotion::coherence::ClusteringParams> {
    let dataset = dataset_of(windows);
    let p = cfg.clustering(&dataset)?;
    Ok(flags.overrides().apply(p))
}

/// The single dataset a cache was built from, or "mixed".
fn dataset_of(windows: &[Window]) -> String {
    let mut names: Vec<&str> = windows.iter().map(|w| w.dataset.as_str()).collect();
    names.dedup();
    match names.as_slice() {
        [one] => one.to_string(),
        _ => "mixed".to_string(),
    }
}

fn label(cfg: &Config, a: LabelArgs) -> Result<()> {
    let windows = load_windows(&a.windows)?;
    let params = clustering_for(cfg, &windows, &a.clustering)?;
    let labelings: Vec<GroupLabels> = windows
        .iter()
        .map(|w| label_window(w, &params))
        .collect::<comotion::Result<_>>()?;

    let stem = a
        .windows
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "windows".into());
    let out = out_path(cfg, a.out, &format!("{stem}.labels"))?;
    save_labels(&out, &windows, &labelings)?;

    let grouped: usize =
        labelings.iter().flat_map(|l| &l.group).filter(|&&g| g != NOISE).count();
    let total: usize = labelings.iter().map(GroupLabels::n_peds).sum();
    println!(
        "{}: labeled {} windows; {}/{} pedestrian slots grouped -> {}",
        a.windows.display(),
        windows.len(),
        grouped,
        total,
        out.display()
    );
    Ok(())
}

// ── label-stats ─────────────────────────────────────────────────────

fn label_stats(cfg: &Config, a: LabelStatsArgs) -> Result<()> {
    let windows = load_windows(&a.windows)?;
    let params = clustering_for(cfg, &windows, &a.clustering)?;
    let by_dataset = split_by_dataset(&windows);

    println!("{:<10} {:>6} {:>12} {:>10} {:>22}", "dataset", "slots", "coherent-%", "hybrid-%", "reference cf/hybrid");
    for (name, ws) in by_dataset {
        let stats = labeling_stats(&ws, &params)?;
        let reference = REFERENCE_LABELING_RATES
            .iter()
            .find(|(d, _, _)| *d == name)
            .map(|(_, cf, hy)| format!("{cf:.1} / {hy:.1}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<10} {:>6} {:>12.1} {:>10.1} {:>22}",
            name,
            stats.total,
            stats.coherent_pct(),
            stats.hybrid_pct(),
            reference
        );
    }
    Ok(())
}

fn split_by_dataset(windows: &[Window]) -> Vec<(String, Vec<Window>)> {
    let mut map: BTreeMap<String, Vec<Window>> = BTreeMap::new();
    for w in windows {
        map.entry(w.dataset.clone()).or_default().push(w.clone());
    }
    map.into_iter().collect()
}

// ── train ───────────────────────────────────────────────────────────

fn train_cmd(cfg: &Config, a: TrainArgs) -> Result<()> {
    let windows = load_windows(&a.windows)?;
    let loaded = load_labels(&a.labels)?;
    let labelings = align_labels(&windows, &loaded)?;

    let seed = pick(a.seed, cfg.seed, 1);
    let mut tc = cfg.training(seed);
    if let Some(v) = a.lr {
        tc.lr = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.beta_kl {
        tc.beta_kl = v;
    }
    if let Some(v) = a.variety_k {
        tc.variety_k = v;
    }

    let result = train(&windows, &labelings, Params::init(seed), &tc)?;

    let out = out_path(cfg, a.out, "model.ckpt")?;
    save_checkpoint(&out, &result.params)?;
    let curve_path = out_path(cfg, a.loss_curve, "loss.txt")?;
    let mut curve = String::from("# epoch mean-loss\n");
    for (e, l) in result.epoch_mean_loss.iter().enumerate() {
        writeln!(curve, "{} {}", e + 1, l).expect("string write");
    }
    std::fs::write(&curve_path, curve)
        .with_context(|| format!("writing {}", curve_path.display()))?;

    println!(
        "trained {} epochs on {} windows (seed {}); loss {:.6} -> {:.6}; checkpoint {}",
        tc.epochs,
        windows.len(),
        seed,
        result.epoch_mean_loss.first().copied().unwrap_or(f64::NAN),
        result.epoch_mean_loss.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────

fn parse_mode(s: &str) -> Result<EvalMode> {
    match s {
        "sample" => Ok(EvalMode::Sample),
        "mean" => Ok(EvalMode::Mean),
        other => bail!("unknown eval mode `{other}` (expected `sample` or `mean`)"),
    }
}

fn eval_cmd(cfg: &Config, a: EvalArgs) -> Result<()> {
    // Validate arguments before touching any input files.
    let samples = pick(a.samples, cfg.eval.samples, 20);
    let mode = parse_mode(&pick(a.mode.clone(), cfg.eval.mode.clone(), "sample".into()))?;
    let seed = pick(a.seed, cfg.seed, 1);

    let windows = load_windows(&a.windows)?;
    let loaded = load_labels(&a.labels)?;
    let labelings = align_labels(&windows, &loaded)?;
    let params = load_checkpoint(&a.checkpoint)?;

    // One report per dataset, plus their unweighted average, mirroring
    // how the reference numbers are tabulated.
    let mut rows = Vec::new();
    for (name, ws) in split_by_dataset(&windows) {
        let ls: Vec<GroupLabels> = windows
            .iter()
            .zip(&labelings)
            .filter(|(w, _)| w.dataset == name)
            .map(|(_, l)| l.clone())
            .collect();
        let report = evaluate(&params, &ws, &ls, samples, mode, seed)?;
        rows.push((name, report));
    }

    let label = match mode {
        EvalMode::Sample => format!("best-of-{samples}"),
        EvalMode::Mean => "mean-decode".into(),
    };
    println!("{:<10} {:>8} {:>8} {:>10} {:>20}", "dataset", "ade", "fde", "examples", "reference ade/fde");
    let mut sums = (0.0, 0.0);
    for (name, r) in &rows {
        let reference = REFERENCE_ADE_FDE
            .iter()
            .find(|(d, _, _)| d == name)
            .map(|(_, ade, fde)| format!("{ade:.2} / {fde:.2}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>10} {:>20}",
            name, r.ade, r.fde, r.n_examples, reference
        );
        sums.0 += r.ade;
        sums.1 += r.fde;
    }
    if rows.len() > 1 {
        let n = rows.len() as f64;
        let reference = REFERENCE_ADE_FDE
            .iter()
            .find(|(d, _, _)| *d == "avg")
            .map(|(_, ade, fde)| format!("{ade:.2} / {fde:.2}"))
            .unwrap_or_default();
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>10} {:>20}",
            "avg",
            sums.0 / n,
            sums.1 / n,
            "",
            reference
        );
    }
    println!("({label}, seed {seed}; reference values are full-scale results reported for comparison only)");
    Ok(())
}

// ── frechet-report ──────────────────────────────────────────────────

/// Coherent-stage-only view of a hybrid labeling: density-stage members
/// drop back to noise. Group ids stay distinct, which is all the
/// similarity report needs.
fn coherent_only(l: &GroupLabels) -> GroupLabels {
    let group = l
        .group
        .iter()
        .zip(&l.source)
        .map(|(&g, &s)| if s == LabelSource::Coherent { g } else { NOISE })
        .collect();
    let source = l
        .source
        .iter()
        .map(|&s| if s == LabelSource::Coherent { s } else { LabelSource::Noise })
        .collect();
    GroupLabels { group, source }
}

fn fmt_sim(s: &GroupSimilarity) -> (String, String) {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    (f(s.intra), f(s.inter))
}

fn frechet_report(_cfg: &Config, a: FrechetReportArgs) -> Result<()> {
    let windows = load_windows(&a.windows)?;
    let loaded = load_labels(&a.labels)?;
    let labelings = align_labels(&windows, &loaded)?;
    let coherent: Vec<GroupLabels> = labelings.iter().map(coherent_only).collect();

    let hybrid_rows = group_similarity_report(&windows, &labelings);
    let coherent_rows = group_similarity_report(&windows, &coherent);

    println!(
        "{:<10} {:>9} {:>9} {:>9} {:>9} {:>26}",
        "dataset", "cf-intra", "cf-inter", "hy-intra", "hy-inter", "reference (cf i/e, hy i/e)"
    );
    for ((name, hy), (_, cf)) in hybrid_rows.iter().zip(&coherent_rows) {
        let (hy_i, hy_e) = fmt_sim(hy);
        let (cf_i, cf_e) = fmt_sim(cf);
        let reference = REFERENCE_GROUP_SIMILARITY
            .iter()
            .find(|(d, ..)| d == name)
            .map(|(_, a, b, c, d)| format!("{a:.2}/{b:.2}, {c:.2}/{d:.2}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<10} {:>9} {:>9} {:>9} {:>9} {:>26}",
            name, cf_i, cf_e, hy_i, hy_e, reference
        );
    }
    println!("(mean pairwise discrete Fréchet distance, meters; lower intra than inter means groups move together)");
    Ok(())
}

// ── plot-data ───────────────────────────────────────────────────────

fn plot_data(cfg: &Config, a: PlotDataArgs) -> Result<()> {
    let windows = load_windows(&a.windows)?;
    let loaded = load_labels(&a.labels)?;
    let labelings = align_labels(&windows, &loaded)?;
    let params = load_checkpoint(&a.checkpoint)?;
    let samples = a.samples.unwrap_or(0);
    let seed = pick(a.seed, cfg.seed, 1);

    let selected: Vec<(usize, &Window)> = windows
        .iter()
        .enumerate()
        .filter(|(_, w)| a.window_id.is_none_or(|id| w.id == id))
        .collect();
    if selected.is_empty() {
        bail!("window id {} not in {}", a.window_id.unwrap_or(0), a.windows.display());
    }

    let mut out = String::new();
    out.push_str("# columns: window ped series step x y\n");
    out.push_str("# series: obs = observed, gt = ground truth, pred = mean decode, s<k> = stochastic decode\n");
    for (wi, w) in selected {
        let labels = &labelings[wi];
        writeln!(out, "# window {} dataset {} groups {:?}", w.id, w.dataset, labels.group)
            .expect("string write");
        for (pi, ped) in w.peds.iter().enumerate() {
            for (series, track) in [("obs", w.obs(pi)), ("gt", w.future(pi))] {
                for (t, p) in track.iter().enumerate() {
                    writeln!(out, "{} {} {} {} {} {}", w.id, ped.ped_id, series, t, p[0], p[1])
                        .expect("string write");
                }
            }
            let mean = forward(&params, w, pi, labels, &LatentMode::Mean, 1.0);
            for (t, p) in mean.pred_abs().iter().enumerate() {
                writeln!(out, "{} {} pred {} {} {}", w.id, ped.ped_id, t, p[0], p[1])
                    .expect("string write");
            }
            // Per-pedestrian stream so the dump is stable under window
            // selection: the same (seed, window, ped) always draws the
            // same latents.
            let mut rng =
                ChaCha12Rng::seed_from_u64(seed ^ w.id.rotate_left(17) ^ (ped.ped_id as u64).rotate_left(41));
            for s in 1..=samples {
                let eps =
                    Array2::from_shape_fn((1, LATENT_DIM), |_| rng.sample::<f64, _>(StandardNormal));
                let f = forward(&params, w, pi, labels, &LatentMode::Sample(eps), 1.0);
                for (t, p) in f.pred_abs().iter().enumerate() {
                    writeln!(out, "{} {} s{} {} {} {}", w.id, ped.ped_id, s, t, p[0], p[1])
                        .expect("string write");
                }
            }
        }
    }

    match a.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating output directory {}", dir.display()))?;
            }
            std::fs::write(&p, out).with_context(|| format!("writing {}", p.display()))?;
            println!("wrote {}", p.display());
        }
        None => print!("{out}"),
    }
    Ok(())
}
