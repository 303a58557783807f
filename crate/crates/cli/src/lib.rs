//! Command-line wiring: generate → label → project → build/validate QRA →
//! score → report.

pub mod config;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use coopsight_core::adapter::{self, AdapterParams, VoxelFeatureMap};
use coopsight_core::io::{read_json, read_jsonl, write_json, write_jsonl};
use coopsight_core::metrics::{self, Prediction, ScoreReport, ThresholdMode};
use coopsight_core::occlusion::{label_scene, OcclusionLabel};
use coopsight_core::projection::{project_box, Bbox2D};
use coopsight_core::qra::{self, QraRecord, RejectReason, ValidationReport};
use coopsight_core::scene::Scene;
use coopsight_core::scenegen;

use config::{input, output, Format, PipelineConfig};

#[derive(Debug, Parser)]
#[command(
    name = "coopsight",
    version,
    about = "Occlusion-aware cooperative perception benchmark pipeline"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Error,
    Range,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the effective config to this path.
    #[arg(long, global = true)]
    pub dump_config: Option<PathBuf>,
    /// Seed for scene generation, splits, record sampling and fault injection
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Occlusion coverage threshold.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Absolute distance tolerance floor in metres.
    #[arg(long, global = true)]
    pub tolerance_abs: Option<f64>,
    /// Relative distance tolerance.
    #[arg(long, global = true)]
    pub tolerance_rel: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub threshold_mode: Option<ModeArg>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Exit with status 1 when validation rejects more records than this.
    #[arg(long, global = true)]
    pub max_reject: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic scenes and a split manifest.
    GenScenes {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Split manifest path (default: `<out>.splits.json`).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Train,val,test fractions.
        #[arg(long, value_delimiter = ',')]
        split: Option<Vec<f64>>,
        #[arg(long)]
        occluder_bias: Option<f64>,
    },
    /// Label every object as occluded or visible from the ego origin.
    LabelOcclusion {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project every object into every camera.
    Project {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a QRA dataset, optionally with injected faults.
    GenQra {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        inject_faults: usize,
        /// Where to list injected faults (default: `<out>.faults.jsonl`).
        #[arg(long)]
        faults_out: Option<PathBuf>,
    },
    /// Check QRA records against their scenes.
    ValidateQra {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Validation report (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted records (JSONL).
        #[arg(long)]
        accepted_out: Option<PathBuf>,
    },
    /// Score predictions (JSONL of `{record_id, raw_text}`) against a dataset.
    Score {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Score report (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the adapter on a tensor file (or a random map) and self-check it.
    AdapterCheck {
        #[arg(long)]
        tensor: Option<PathBuf>,
        /// C,H,W of the random map used without `--tensor`.
        #[arg(long, value_delimiter = ',', default_values_t = [8usize, 128, 128])]
        shape: Vec<usize>,
        /// Also write the input map in tensor format.
        #[arg(long)]
        write_tensor: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        img_tokens: usize,
        #[arg(long, default_value_t = 8)]
        txt_tokens: usize,
    },
    /// Render a score report as markdown, CSV or JSON.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    TooManyRejections,
}

/// One line of the `project` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedBox {
    pub scene_id: String,
    pub object_id: String,
    pub sensor_id: String,
    pub bbox: Bbox2D,
    pub pixels: [i64; 4],
}

/// One line of a predictions file.
#[derive(Debug, Clone, Deserialize)]
struct PredictionLine {
    record_id: String,
    raw_text: String,
}

/// Applies the config file and flags, in that order.
pub fn resolve_config(g: &GlobalArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if let Some(v) = g.tau {
        cfg.tau = v;
    }
    if let Some(v) = g.tolerance_abs {
        cfg.tolerance.abs_floor_m = v;
    }
    if let Some(v) = g.tolerance_rel {
        cfg.tolerance.rel_frac = v;
    }
    if let Some(m) = g.threshold_mode {
        cfg.scoring.threshold_mode = match m {
            ModeArg::Error => ThresholdMode::Error,
            ModeArg::Range => ThresholdMode::Range,
        };
    }
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    if g.max_reject.is_some() {
        cfg.max_reject = g.max_reject;
    }
    if let Some(f) = g.format {
        cfg.format = f;
    }
    Ok(cfg)
}

fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut cfg = resolve_config(&cli.global)?;
    if let Some(n) = cfg.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        // A second call in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if let Some(p) = &cli.global.dump_config {
        std::fs::write(p, cfg.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    let paths = cfg.paths.clone();
    match cli.command {
        Command::GenScenes {
            n,
            out,
            manifest,
            split,
            occluder_bias,
        } => {
            let out = output(&out, &paths.scenes, "scenes")?;
            cfg.generation.seed = cfg.seed;
            if let Some(n) = n {
                cfg.generation.n_scenes = n;
            }
            if let Some(b) = occluder_bias {
                cfg.generation.occluder_bias = b;
            }
            if let Some(f) = split {
                let Ok(f) = <[f64; 3]>::try_from(f) else {
                    bail!("--split takes three comma-separated fractions");
                };
                cfg.split = f;
            }
            let scenes = scenegen::generate(&cfg.generation)?;
            let scenes = scenegen::stratified_split(scenes, cfg.split, cfg.seed)?;
            write_jsonl(&out, &scenes)?;
            let manifest = manifest.unwrap_or_else(|| sidecar(&out, ".splits.json"));
            write_json(&manifest, &scenegen::split_manifest(&scenes))?;
            info!("wrote {} scenes to {}", scenes.len(), out.display());
        }
        Command::LabelOcclusion { scenes, out } => {
            let scenes: Vec<Scene> = read_jsonl(&input(&scenes, &paths.scenes, "scenes")?)?;
            let out = output(&out, &paths.labels, "labels")?;
            let per_scene = scenes
                .par_iter()
                .map(|s| label_scene(s, cfg.tau).with_context(|| format!("scene {}", s.scene_id)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let labels: Vec<OcclusionLabel> = per_scene.into_iter().flatten().collect();
            write_jsonl(&out, &labels)?;
            info!("wrote {} labels to {}", labels.len(), out.display());
        }
        Command::Project { scenes, out } => {
            let scenes: Vec<Scene> = read_jsonl(&input(&scenes, &paths.scenes, "scenes")?)?;
            let out = output(&out, &paths.boxes, "boxes")?;
            let per_scene = scenes
                .par_iter()
                .map(|s| project_scene(s).with_context(|| format!("scene {}", s.scene_id)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let boxes: Vec<ProjectedBox> = per_scene.into_iter().flatten().collect();
            write_jsonl(&out, &boxes)?;
            info!("wrote {} boxes to {}", boxes.len(), out.display());
        }
        Command::GenQra {
            scenes,
            labels,
            n,
            out,
            inject_faults,
            faults_out,
        } => {
            let scenes: Vec<Scene> = read_jsonl(&input(&scenes, &paths.scenes, "scenes")?)?;
            let labels: Vec<OcclusionLabel> = read_jsonl(&input(&labels, &paths.labels, "labels")?)?;
            let out = output(&out, &paths.dataset, "dataset")?;
            let n = n.unwrap_or(cfg.n_records);
            let mut records = qra::generate_dataset(&scenes, &labels, n, &cfg.qra, cfg.seed)?;
            if inject_faults > 0 {
                if inject_faults > records.len() {
                    bail!("cannot inject {inject_faults} faults into {} records", records.len());
                }
                let faults = qra::inject_faults(&mut records, &scenes, inject_faults, cfg.seed);
                let faults_out = faults_out.unwrap_or_else(|| sidecar(&out, ".faults.jsonl"));
                write_jsonl(&faults_out, &faults)?;
            }
            write_jsonl(&out, &records)?;
            info!("wrote {} records to {}", records.len(), out.display());
        }
        Command::ValidateQra {
            dataset,
            scenes,
            out,
            accepted_out,
        } => {
            let records: Vec<QraRecord> = read_jsonl(&input(&dataset, &paths.dataset, "dataset")?)?;
            let scenes: Vec<Scene> = read_jsonl(&input(&scenes, &paths.scenes, "scenes")?)?;
            let report = qra::validate_dataset(&records, &scenes, &cfg.tolerance)?;
            if let Some(p) = out.as_ref().or(paths.reports.as_ref()) {
                write_json(p, &report)?;
            }
            if let Some(p) = accepted_out {
                let keep: std::collections::HashSet<&str> = report.accepted.iter().map(String::as_str).collect();
                let accepted: Vec<&QraRecord> =
                    records.iter().filter(|r| keep.contains(r.record_id.as_str())).collect();
                write_jsonl(&p, &accepted)?;
            }
            write_text(None, &render_validation(&report, cfg.format))?;
            if cfg.max_reject.is_some_and(|m| report.rejected_count() > m) {
                return Ok(Outcome::TooManyRejections);
            }
        }
        Command::Score {
            predictions,
            dataset,
            scenes,
            labels,
            out,
            method,
        } => {
            let lines: Vec<PredictionLine> = read_jsonl(&input(&predictions, &paths.predictions, "predictions")?)?;
            let records: Vec<QraRecord> = read_jsonl(&input(&dataset, &paths.dataset, "dataset")?)?;
            let scenes: Vec<Scene> = read_jsonl(&input(&scenes, &paths.scenes, "scenes")?)?;
            let labels: Vec<OcclusionLabel> = read_jsonl(&input(&labels, &paths.labels, "labels")?)?;
            let preds: Vec<Prediction> = lines
                .into_par_iter()
                .map(|l| Prediction::from_text(l.record_id, l.raw_text))
                .collect();
            if let Some(m) = method {
                cfg.scoring.method = m;
            }
            let report = metrics::score(&preds, &records, &scenes, &labels, &cfg.scoring, None)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            if let Some(p) = out.as_ref().or(paths.reports.as_ref()) {
                write_json(p, &report)?;
            }
            write_text(None, &render_score(&report, cfg.format))?;
        }
        Command::AdapterCheck {
            tensor,
            shape,
            write_tensor,
            img_tokens,
            txt_tokens,
        } => {
            let [c, h, w] = <[usize; 3]>::try_from(shape).map_err(|_| anyhow::anyhow!("--shape takes C,H,W"))?;
            let v = match &tensor {
                Some(p) => {
                    let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                    VoxelFeatureMap::read_from(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))?
                }
                None => VoxelFeatureMap::random(c, h, w, cfg.seed)?,
            };
            if let Some(p) = &write_tensor {
                let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
                v.write_to(BufWriter::new(f))?;
            }
            cfg.adapter.in_channels = v.shape().0;
            let params = AdapterParams::init(&cfg.adapter, cfg.seed)?;
            let diag = adapter::diagnose(&v, &params, cfg.seed)?;
            let d = cfg.adapter.d_model;
            let lidar = adapter::project_features(&v, &params)?;
            let seq = adapter::assemble(ndarray_zeros(img_tokens, d), lidar, ndarray_zeros(txt_tokens, d))?;
            let passed = seq.len() == img_tokens + adapter::N_TOKENS + txt_tokens
                && diag.impulse_leak == 0.0
                && diag.jvp_rel_error < 1e-4;
            write_text(
                None,
                &render_adapter(&diag, seq.len(), &seq.boundaries(), passed, cfg.format),
            )?;
            if !passed {
                bail!("adapter self-check failed");
            }
        }
        Command::Report { input: path, out } => {
            if !path.exists() {
                bail!("report file {} does not exist", path.display());
            }
            let report: ScoreReport = read_json(&path)?;
            write_text(out.as_deref(), &render_score(&report, cfg.format))?;
        }
    }
    Ok(Outcome::Success)
}

fn ndarray_zeros(rows: usize, cols: usize) -> ndarray::Array2<f64> {
    ndarray::Array2::zeros((rows, cols))
}

fn project_scene(scene: &Scene) -> anyhow::Result<Vec<ProjectedBox>> {
    let mut out = Vec::new();
    for obj in &scene.objects {
        for cam in &scene.cameras {
            if let Some(b) = project_box(obj, cam)? {
                out.push(ProjectedBox {
                    scene_id: scene.scene_id.clone(),
                    object_id: obj.id.clone(),
                    sensor_id: cam.sensor_id.clone(),
                    bbox: b,
                    pixels: b.to_pixels(),
                });
            }
        }
    }
    Ok(out)
}

fn render_score(report: &ScoreReport, format: Format) -> String {
    match format {
        Format::Json => report.render_json(),
        Format::Md => report.render_markdown(),
        Format::Csv => report.render_csv(),
    }
}

fn render_validation(report: &ValidationReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Md => report.render_text(),
        Format::Csv => {
            let mut s = String::from("reason,count\n");
            for r in RejectReason::ALL {
                let _ = writeln!(s, "{},{}", r.as_str(), report.histogram.get(&r).copied().unwrap_or(0));
            }
            let _ = writeln!(s, "total-rejected,{}", report.rejected_count());
            s
        }
    }
}

fn render_adapter(
    d: &adapter::AdapterDiagnostics,
    len: usize,
    boundaries: &[usize],
    passed: bool,
    format: Format,
) -> String {
    match format {
        Format::Json => {
            let v = serde_json::json!({
                "diagnostics": d,
                "sequence_length": len,
                "boundaries": boundaries,
                "passed": passed,
            });
            let mut s = serde_json::to_string_pretty(&v).expect("json value serializes");
            s.push('\n');
            s
        }
        Format::Md | Format::Csv => {
            let [c, h, w] = d.input_shape;
            let mut s = String::new();
            let _ = writeln!(s, "input:            {c}x{h}x{w}");
            let _ = writeln!(s, "lidar tokens:     {} x {}", d.tokens, d.d_model);
            let _ = writeln!(s, "sequence length:  {len} (boundaries {boundaries:?})");
            let _ = writeln!(s, "impulse leak:     {:e}", d.impulse_leak);
            let _ = writeln!(s, "impulse response: {:e}", d.impulse_response);
            let _ = writeln!(s, "jvp rel. error:   {:e}", d.jvp_rel_error);
            let _ = writeln!(s, "{}", if passed { "PASS" } else { "FAIL" });
            s
        }
    }
}
