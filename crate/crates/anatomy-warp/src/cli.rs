//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::batch::default_pool;
use crate::config::ConfigFile;
use crate::deform::{self, CaseFiles, DeformRequest};
use crate::error::{Error, Result};
use crate::eval;
use crate::turing;

const SIGN_CONVENTION: &str = "\
Warping is backward: the output at voxel x is the input sampled at x + V(x),
with V = sum_k C_k * grad(G_sigma * S_k) in voxels.

      organ S_k            x
    +---------+
    |  1 1 1  |  <---- V(x)  .      C > 0: V points into the organ, so x reads
    |  1 1 1  |                     tissue from closer to it; the organ grows
    +---------+                     (distension).
                                    C < 0: V points away; the organ shrinks
                                    (evacuation).";

#[derive(Debug, Parser)]
#[command(
    name = "anatomy-warp",
    version,
    about = "Anatomy-informed deformation of prostate MRI and lesion-detection evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the anatomy displacement field as a 3-channel volume.
    Field(FieldArgs),
    /// Augment one case and record what was drawn.
    #[command(long_about = SIGN_CONVENTION)]
    Deform(DeformArgs),
    /// Recompute a `deform` run from its provenance record.
    Replay(ReplayArgs),
    /// Crop a case to the prostate with the configured organ margins.
    Crop(CropArgs),
    /// Lesion- and patient-level detection metrics over a manifest.
    Eval(EvalArgs),
    /// Blinded original / anatomy / elastic images with a sealed answer key.
    TuringBatch(TuringArgs),
}

fn parse_amplitude(s: &str) -> std::result::Result<(u32, f64), String> {
    let (label, c) = s.split_once('=').ok_or_else(|| format!("`{s}` is not LABEL=C"))?;
    let label: u32 = label
        .trim()
        .parse()
        .map_err(|_| format!("`{label}` is not a label id"))?;
    let c: f64 = c.trim().parse().map_err(|_| format!("`{c}` is not a number"))?;
    if !c.is_finite() {
        return Err(format!("amplitude `{c}` is not finite"));
    }
    Ok((label, c))
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CaseArgs {
    /// Image; a 4th dimension holds channels.
    #[arg(long)]
    pub image: PathBuf,
    /// Lesion label map.
    #[arg(long)]
    pub lesions: PathBuf,
    /// Organ label map.
    #[arg(long)]
    pub organs: PathBuf,
}

impl CaseArgs {
    fn files(&self) -> CaseFiles {
        CaseFiles {
            image: self.image.clone(),
            lesions: self.lesions.clone(),
            organs: self.organs.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    #[arg(long)]
    pub organs: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    /// Organ amplitude as LABEL=C; repeatable. Default: every configured organ at +c_max.
    #[arg(long = "amplitude", value_parser = parse_amplitude)]
    pub amplitudes: Vec<(u32, f64)>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeformArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[command(flatten)]
    pub config: ConfigArg,
    /// Outputs go to PREFIX_{image,lesions,organs,field}.nii.gz and PREFIX_provenance.json.
    #[arg(long)]
    pub out_prefix: PathBuf,
    /// Overrides `augmentation.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed amplitude LABEL=C, repeatable. Replaces the random draw; configured organs not listed get 0.
    #[arg(long = "amplitude", value_parser = parse_amplitude)]
    pub amplitudes: Vec<(u32, f64)>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub provenance: PathBuf,
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct CropArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    /// JSON report; roc.csv and froc.csv are written next to it.
    #[arg(long)]
    pub report: PathBuf,
    /// Manifest of a reference model on the same cases, for a paired bootstrap.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuringArgs {
    #[arg(long)]
    pub cases: PathBuf,
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides `augmentation.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Run a command; the value is the summary printed on stdout.
pub fn run(cli: Cli) -> Result<Value> {
    let load = |c: &ConfigArg| ConfigFile::load(c.config.as_deref());
    match cli.command {
        Command::Field(a) => {
            let config = load(&a.config)?;
            let field = deform::field(&a.organs, &config, &a.amplitudes, &a.out)?;
            Ok(json!({ "out": a.out, "max_displacement": field.max_magnitude() }))
        }
        Command::Deform(a) => {
            let config = load(&a.config)?;
            let seed = a.seed.unwrap_or(config.augmentation.seed);
            let files = a.case.files();
            let record = deform::deform(&DeformRequest {
                files: &files,
                config: &config,
                out_prefix: &a.out_prefix,
                seed,
                amplitude_overrides: &a.amplitudes,
            })?;
            Ok(json!({ "draw": record.draw, "provenance": deform::provenance_path(&a.out_prefix) }))
        }
        Command::Replay(a) => {
            let report = deform::replay(&a.provenance, &a.out_prefix)?;
            Ok(serde_json::to_value(report).expect("in-memory JSON"))
        }
        Command::Crop(a) => {
            let config = load(&a.config)?;
            let record = deform::crop(&a.case.files(), &config, &a.out_prefix)?;
            Ok(serde_json::to_value(record).expect("in-memory JSON"))
        }
        Command::Eval(a) => {
            let config = load(&a.config)?;
            let pool = default_pool()?;
            let cases = eval::load_cases(&a.manifest, &config.metrics, &pool)?;
            let baseline = match &a.baseline {
                Some(b) => Some(eval::load_cases(b, &config.metrics, &pool)?),
                None => None,
            };
            let (report, curves, base_curves) = eval::evaluate(&cases, baseline.as_deref(), &config.metrics)?;
            eval::write_report(&a.report, &report, &curves, base_curves.as_ref())?;
            let p = &report.evaluated.patient;
            Ok(json!({
                "report": a.report,
                "pauroc": p.pauroc.normalized,
                "f1": p.f1.f1,
                "detected": report.evaluated.lesion.at_fp_per_scan.detected,
                "lesions": report.evaluated.lesion.lesions,
            }))
        }
        Command::TuringBatch(a) => {
            let config = load(&a.config)?;
            let seed = a.seed.unwrap_or(config.augmentation.seed);
            let manifest = turing::turing_batch(&a.cases, &config, &a.out_dir, seed, &default_pool()?)?;
            Ok(json!({ "samples": manifest.samples.len(), "answer_key_sha256": manifest.answer_key_sha256 }))
        }
    }
}

/// Machine-readable error record for stderr.
pub fn error_record(e: &Error) -> Value {
    json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
}
