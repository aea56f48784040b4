//! End-to-end detection evaluation over a manifest of NIfTI cases.
//!
//! Manifest:
//!
//! ```json
//! { "cases": [ { "id": "p001", "prediction": "p001_prob.nii.gz",
//!                "ground_truth": "p001_gt.nii.gz", "label": true } ] }
//! ```
//!
//! Relative paths are resolved against the manifest's directory. `label`
//! (the patient has csPCa) defaults to "the ground truth holds a lesion".

use std::path::{Path, PathBuf};

use anatomy_warp_core::metrics::{
    bootstrap_compare, bootstrap_summary, extract_objects, f1_at_sensitivity, froc, label_objects, patient_scores,
    roc_and_pauroc, ArmSummary, BootstrapComparison, CaseResult, F1AtSensitivity, FrocCurve, OperatingPoint,
    PartialAuc, RocCurve, VoxelSet,
};
use anatomy_warp_core::ScalarVolume;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::config::{GroundTruthObjects, MetricsConfig};
use crate::error::{Error, Result};
use crate::fsutil::{read_json, resolve, write_atomic, write_json};
use crate::io::read_volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCase {
    pub id: String,
    pub prediction: PathBuf,
    pub ground_truth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub cases: Vec<ManifestCase>,
}

fn load_one(manifest: &Path, case: &ManifestCase, metrics: &MetricsConfig) -> Result<CaseResult> {
    let pred_path = resolve(manifest, &case.prediction);
    let gt_path = resolve(manifest, &case.ground_truth);
    let pred = read_volume(&pred_path)?;
    let gt_file = read_volume(&gt_path)?;
    if pred.num_channels() != 1 {
        return Err(Error::Manifest {
            path: pred_path,
            reason: "probability maps need exactly one channel".into(),
        });
    }
    let gt = gt_file.to_labels(&gt_path)?;
    if pred.geometry != *gt.geometry() {
        return Err(anatomy_warp_core::Error::GeometryMismatch {
            expected: *gt.geometry(),
            found: pred.geometry,
        }
        .into());
    }
    let prob = ScalarVolume::from_vec(pred.geometry, pred.channels.into_iter().next().expect("one channel"))?;
    let pred_objects = extract_objects(&prob, metrics.prob_threshold, metrics.connectivity)?;
    let gt_objects: Vec<VoxelSet> = match metrics.ground_truth_objects {
        GroundTruthObjects::Labels => label_objects(&gt),
        GroundTruthObjects::Components => {
            let mask = gt.map(|&l| if l != 0 { 1.0 } else { 0.0 });
            extract_objects(&mask, 0.5, metrics.connectivity)?
                .into_iter()
                .map(|o| o.voxels)
                .collect()
        }
    };
    let label = case.label.unwrap_or(!gt_objects.is_empty());
    Ok(CaseResult::new(case.id.clone(), label, pred_objects, gt_objects)?)
}

/// Read and score every case of a manifest on `pool`; order is preserved.
pub fn load_cases(manifest_path: &Path, metrics: &MetricsConfig, pool: &ThreadPool) -> Result<Vec<CaseResult>> {
    let manifest: Manifest = read_json(manifest_path)?;
    if manifest.cases.is_empty() {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            reason: "no cases".into(),
        });
    }
    let mut ids: Vec<&str> = manifest.cases.iter().map(|c| c.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Manifest {
            path: manifest_path.to_path_buf(),
            reason: format!("duplicate case id `{}`", w[0]),
        });
    }
    pool.install(|| {
        manifest
            .cases
            .par_iter()
            .map(|c| load_one(manifest_path, c, metrics))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientMetrics {
    pub auroc: f64,
    pub pauroc: PartialAuc,
    pub f1: F1AtSensitivity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LesionMetrics {
    pub lesions: usize,
    pub at_fp_per_scan: OperatingPoint,
    /// Mean sensitivity over `[0, froc_max_fp]` false positives per scan.
    pub froc_area: f64,
}

/// Bootstrap spread (or paired comparison) of the three headline numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapBlock<T> {
    pub pauroc: T,
    pub f1: T,
    pub detected: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmReport {
    pub cases: usize,
    pub positive_cases: usize,
    pub patient: PatientMetrics,
    pub lesion: LesionMetrics,
    pub bootstrap: BootstrapBlock<ArmSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metrics: MetricsConfig,
    pub evaluated: ArmReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<ArmReport>,
    /// Paired bootstrap, difference taken as evaluated − baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<BootstrapBlock<BootstrapComparison>>,
}

fn pauroc_of(cases: &[&CaseResult], m: &MetricsConfig) -> anatomy_warp_core::Result<f64> {
    let (scores, labels) = patient_scores(cases.iter().copied());
    Ok(roc_and_pauroc(&scores, &labels, m.sensitivity_floor)?.1.normalized)
}

fn f1_of(cases: &[&CaseResult], m: &MetricsConfig) -> anatomy_warp_core::Result<f64> {
    let (scores, labels) = patient_scores(cases.iter().copied());
    Ok(f1_at_sensitivity(&scores, &labels, m.target_sensitivity)?.f1)
}

fn detected_of(cases: &[&CaseResult], m: &MetricsConfig) -> anatomy_warp_core::Result<f64> {
    Ok(froc(cases.iter().copied(), m.iou_threshold)?
        .sensitivity_at_fp(m.fp_per_scan)
        .detected as f64)
}

/// Patient ROC and lesion FROC curves of one arm.
pub struct Curves {
    pub roc: RocCurve,
    pub froc: FrocCurve,
}

fn arm_report(cases: &[CaseResult], m: &MetricsConfig) -> Result<(ArmReport, Curves)> {
    let (scores, labels) = patient_scores(cases);
    let (roc, pauroc) = roc_and_pauroc(&scores, &labels, m.sensitivity_floor)?;
    let f1 = f1_at_sensitivity(&scores, &labels, m.target_sensitivity)?;
    let fr = froc(cases, m.iou_threshold)?;
    let boot = m.bootstrap;
    let report = ArmReport {
        cases: cases.len(),
        positive_cases: labels.iter().filter(|&&l| l).count(),
        patient: PatientMetrics {
            auroc: roc.auc(),
            pauroc,
            f1,
        },
        lesion: LesionMetrics {
            lesions: fr.num_lesions,
            at_fp_per_scan: fr.sensitivity_at_fp(m.fp_per_scan),
            froc_area: fr.normalized_area(m.froc_max_fp),
        },
        bootstrap: BootstrapBlock {
            pauroc: bootstrap_summary(cases, |c| pauroc_of(c, m), boot)?,
            f1: bootstrap_summary(cases, |c| f1_of(c, m), boot)?,
            detected: bootstrap_summary(cases, |c| detected_of(c, m), boot)?,
        },
    };
    Ok((report, Curves { roc, froc: fr }))
}

/// Metrics of `cases`, plus a paired comparison when `baseline` is given.
pub fn evaluate(
    cases: &[CaseResult],
    baseline: Option<&[CaseResult]>,
    m: &MetricsConfig,
) -> Result<(EvalReport, Curves, Option<Curves>)> {
    let (evaluated, curves) = arm_report(cases, m)?;
    let (baseline_report, baseline_curves, comparison) = match baseline {
        None => (None, None, None),
        Some(base) => {
            let (report, curves) = arm_report(base, m)?;
            let b = m.bootstrap;
            let comparison = BootstrapBlock {
                pauroc: bootstrap_compare(base, cases, |c| pauroc_of(c, m), b)?,
                f1: bootstrap_compare(base, cases, |c| f1_of(c, m), b)?,
                detected: bootstrap_compare(base, cases, |c| detected_of(c, m), b)?,
            };
            (Some(report), Some(curves), Some(comparison))
        }
    };
    Ok((
        EvalReport {
            metrics: m.clone(),
            evaluated,
            baseline: baseline_report,
            comparison,
        },
        curves,
        baseline_curves,
    ))
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV");
    }
    w.into_inner().expect("in-memory CSV")
}

/// `threshold,fpr,tpr` rows; the first threshold is `inf`.
pub fn roc_csv(roc: &RocCurve) -> Vec<u8> {
    csv_bytes(&roc.points)
}

/// `threshold,fp_per_scan,sensitivity,true_positives,false_positives` rows.
pub fn froc_csv(froc: &FrocCurve) -> Vec<u8> {
    csv_bytes(&froc.points)
}

/// Write the report and `roc.csv` / `froc.csv` (plus `baseline_*.csv`)
/// next to it.
pub fn write_report(report_path: &Path, report: &EvalReport, curves: &Curves, baseline: Option<&Curves>) -> Result<()> {
    let sibling = |name: &str| report_path.with_file_name(name);
    write_atomic(&sibling("roc.csv"), &roc_csv(&curves.roc))?;
    write_atomic(&sibling("froc.csv"), &froc_csv(&curves.froc))?;
    if let Some(b) = baseline {
        write_atomic(&sibling("baseline_roc.csv"), &roc_csv(&b.roc))?;
        write_atomic(&sibling("baseline_froc.csv"), &froc_csv(&b.froc))?;
    }
    write_json(report_path, report)
}
