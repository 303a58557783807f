//! On-disk pipeline configuration. Precedence: defaults, then the config
//! file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use coopsight_core::adapter::AdapterConfig;
use coopsight_core::metrics::ScoreOptions;
use coopsight_core::occlusion::DEFAULT_TAU;
use coopsight_core::qra::{QraConfig, TolerancePolicy};
use coopsight_core::scenegen::GenConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    #[default]
    Md,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub scenes: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub boxes: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub paths: Paths,
    pub generation: GenConfig,
    /// Train/val/test fractions.
    pub split: [f64; 3],
    pub tau: f64,
    pub n_records: usize,
    pub qra: QraConfig,
    pub tolerance: TolerancePolicy,
    pub max_reject: Option<usize>,
    pub scoring: ScoreOptions,
    pub adapter: AdapterConfig,
    pub format: Format,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            threads: None,
            paths: Paths::default(),
            generation: GenConfig::default(),
            split: [0.76, 0.13, 0.11],
            tau: DEFAULT_TAU,
            n_records: 1000,
            qra: QraConfig::default(),
            tolerance: TolerancePolicy::default(),
            max_reject: None,
            scoring: ScoreOptions::default(),
            adapter: AdapterConfig {
                in_channels: 8,
                stem_channels: 16,
                hidden: 32,
                d_model: 32,
            },
            format: Format::Md,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        coopsight_core::io::read_json(path).with_context(|| format!("loading config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Resolves an input path from a flag or the config, and checks it exists.
pub fn input(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    let Some(p) = flag.clone().or_else(|| fallback.clone()) else {
        bail!("no {what} path given (flag or config paths.{what})");
    };
    if !p.exists() {
        bail!("{what} file {} does not exist", p.display());
    }
    Ok(p)
}

/// Resolves an output path from a flag or the config.
pub fn output(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .with_context(|| format!("no output path for {what} (use --out or config paths.{what})"))
}
