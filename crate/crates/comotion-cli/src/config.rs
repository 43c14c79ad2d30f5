//! Run configuration: a TOML file plus command-line overrides.
//!
//! Precedence, highest first: command-line flag, config file entry,
//! built-in default. Clustering thresholds additionally resolve through
//! the per-dataset table: `[clustering.<dataset>]` beats `[clustering]`
//! beats the library's per-dataset defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use comotion::coherence::ClusteringParams;
use comotion::net::TrainConfig;
use serde::Deserialize;

/// Environment variable naming the default annotation directory.
pub const DATA_DIR_VAR: &str = "COMOTION_DATA_DIR";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Directory holding `<dataset>.txt` annotation files.
    pub data_dir: Option<PathBuf>,
    /// Directory that default output paths land in.
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub obs_len: Option<usize>,
    pub pred_len: Option<usize>,
    pub stride: Option<usize>,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub eval: EvalSection,
    /// Raw clustering table; resolved per dataset by [`Config::clustering`].
    #[serde(default)]
    clustering: toml::Table,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub beta_kl: Option<f64>,
    pub variety_k: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub samples: Option<usize>,
    pub mode: Option<String>,
}

/// Field-wise overrides of [`ClusteringParams`]; unset fields keep the
/// value from the layer below.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringOverrides {
    pub label_frames: Option<usize>,
    pub k_max: Option<usize>,
    pub lambda: Option<f64>,
    pub theta: Option<f64>,
    pub s_lateral: Option<f64>,
    pub s_longitudinal: Option<f64>,
    pub min_pts: Option<usize>,
}

impl ClusteringOverrides {
    pub fn apply(&self, mut p: ClusteringParams) -> ClusteringParams {
        if let Some(v) = self.label_frames {
            p.label_frames = v;
        }
        if let Some(v) = self.k_max {
            p.k_max = v;
        }
        if let Some(v) = self.lambda {
            p.lambda = v;
        }
        if let Some(v) = self.theta {
            p.theta = v;
        }
        if let Some(v) = self.s_lateral {
            p.s_lateral = v;
        }
        if let Some(v) = self.s_longitudinal {
            p.s_longitudinal = v;
        }
        if let Some(v) = self.min_pts {
            p.min_pts = v;
        }
        p
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.split_clustering()
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Split the raw `[clustering]` table into global scalar overrides and
    /// per-dataset sub-tables, validating every field name.
    fn split_clustering(&self) -> Result<(ClusteringOverrides, BTreeMap<String, ClusteringOverrides>)> {
        let mut global = toml::Table::new();
        let mut per_dataset = BTreeMap::new();
        for (key, value) in &self.clustering {
            match value {
                toml::Value::Table(t) => {
                    let o: ClusteringOverrides = t
                        .clone()
                        .try_into()
                        .with_context(|| format!("[clustering.{key}]"))?;
                    per_dataset.insert(key.clone(), o);
                }
                v => {
                    global.insert(key.clone(), v.clone());
                }
            }
        }
        let global: ClusteringOverrides =
            global.try_into().context("[clustering]")?;
        Ok((global, per_dataset))
    }

    /// Clustering thresholds for one dataset: library defaults for that
    /// dataset, then `[clustering]`, then `[clustering.<dataset>]`.
    pub fn clustering(&self, dataset: &str) -> Result<ClusteringParams> {
        let (global, per_dataset) = self.split_clustering()?;
        let mut p = global.apply(ClusteringParams::for_dataset(dataset));
        if let Some(o) = per_dataset.get(&dataset.to_ascii_lowercase()) {
            p = o.apply(p);
        }
        Ok(p)
    }

    /// Training hyperparameters with the section's overrides applied.
    pub fn training(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            lr: self.training.lr.unwrap_or(d.lr),
            batch_size: self.training.batch_size.unwrap_or(d.batch_size),
            epochs: self.training.epochs.unwrap_or(d.epochs),
            beta_kl: self.training.beta_kl.unwrap_or(d.beta_kl),
            variety_k: self.training.variety_k.unwrap_or(d.variety_k),
            seed,
            ..d
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Annotation directory: config entry, else the environment variable.
    pub fn data_dir(&self) -> Result<PathBuf> {
        if let Some(d) = &self.data_dir {
            return Ok(d.clone());
        }
        if let Some(d) = std::env::var_os(DATA_DIR_VAR) {
            return Ok(PathBuf::from(d));
        }
        bail!("no data directory: set `data_dir` in the config or the {DATA_DIR_VAR} environment variable")
    }
}

/// First of: flag, config value, default.
pub fn pick<T>(flag: Option<T>, cfg: Option<T>, default: T) -> T {
    flag.or(cfg).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_built_in_defaults() {
        let cfg = Config::default();
        assert_eq!(pick(None, cfg.seed, 1u64), 1);
        assert_eq!(pick(None, cfg.obs_len, 8usize), 8);
        assert_eq!(cfg.output_dir(), PathBuf::from("out"));
        let p = cfg.clustering("hotel").unwrap();
        assert_eq!(p, ClusteringParams::default());
        let p = cfg.clustering("univ").unwrap();
        assert_eq!(p, ClusteringParams::for_dataset("univ"));
        let t = cfg.training(9);
        assert_eq!(t.lr, TrainConfig::default().lr);
        assert_eq!(t.seed, 9);
    }

    #[test]
    fn clustering_layers_resolve_in_order() {
        let cfg: Config = toml::from_str(
            r#"
            [clustering]
            theta = 0.4
            [clustering.univ]
            theta = 0.3
            "#,
        )
        .unwrap();
        // Global override beats the library default...
        assert_eq!(cfg.clustering("eth").unwrap().theta, 0.4);
        // ...and the dataset table beats both (including univ's own
        // library default of 0.2).
        let univ = cfg.clustering("univ").unwrap();
        assert_eq!(univ.theta, 0.3);
        assert_eq!(univ.label_frames, 8); // untouched univ default
    }

    #[test]
    fn unknown_clustering_field_is_rejected() {
        let cfg: Config = toml::from_str("[clustering]\nthetta = 0.4\n").unwrap();
        assert!(cfg.clustering("eth").is_err());
        let cfg: Config = toml::from_str("[clustering.univ]\nmin_points = 3\n").unwrap();
        assert!(cfg.clustering("univ").is_err());
    }

    #[test]
    fn unknown_top_level_field_is_rejected() {
        assert!(toml::from_str::<Config>("sede = 3\n").is_err());
        assert!(toml::from_str::<Config>("[training]\nlearning_rate = 0.1\n").is_err());
    }

    #[test]
    fn training_section_overrides_defaults() {
        let cfg: Config = toml::from_str("[training]\nlr = 0.002\nepochs = 5\n").unwrap();
        let t = cfg.training(1);
        assert_eq!(t.lr, 0.002);
        assert_eq!(t.epochs, 5);
        assert_eq!(t.batch_size, TrainConfig::default().batch_size);
    }
}
