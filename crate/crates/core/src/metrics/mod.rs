//! Patient- and lesion-level detection metrics.
//!
//! Predicted lesions are connected components of the thresholded probability
//! map; a prediction is a true positive when it overlaps a ground-truth
//! lesion with IoU at or above the matching threshold. Patient-level scores
//! are the highest object confidence in a case.

mod bootstrap;
mod froc;
mod objects;
mod roc;

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub use bootstrap::{
    bootstrap_compare, bootstrap_compare_with, bootstrap_summary, ArmSummary, BootstrapComparison, BootstrapConfig,
};
pub use froc::{froc, FrocCurve, FrocPoint, OperatingPoint};
pub use objects::{
    extract_objects, label_objects, match_objects, Connectivity, DetectedObject, MatchOutcome, VoxelSet,
};
pub use roc::{f1_at_sensitivity, roc_and_pauroc, roc_curve, F1AtSensitivity, PartialAuc, RocCurve, RocPoint};

/// Default thresholds of the evaluation protocol.
pub const PROB_THRESHOLD: f64 = 0.5;
pub const IOU_THRESHOLD: f64 = 0.1;
pub const SENSITIVITY_FLOOR: f64 = 0.7875;
pub const FP_PER_SCAN: f64 = 0.32;
/// Radiologist sensitivity at PI-RADS ≥ 4; the pAUROC floor is 90% of it.
pub const TARGET_SENSITIVITY: f64 = 0.875;

/// Everything the metrics need to know about one evaluated case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub case_id: String,
    /// Highest prediction confidence, 0 without predictions.
    pub patient_score: f64,
    /// Whether the patient has clinically significant cancer.
    pub patient_label: bool,
    pub pred_objects: Vec<DetectedObject>,
    pub gt_objects: Vec<VoxelSet>,
}

impl CaseResult {
    pub fn new(
        case_id: impl Into<String>,
        patient_label: bool,
        pred_objects: Vec<DetectedObject>,
        gt_objects: Vec<VoxelSet>,
    ) -> Result<Self> {
        for p in &pred_objects {
            if !(0.0..=1.0).contains(&p.confidence) {
                return Err(Error::param("confidence", "must lie in [0, 1]"));
            }
            if p.voxels.is_empty() {
                return Err(Error::param("pred_objects", "voxel sets must be non-empty"));
            }
        }
        if gt_objects.iter().any(VoxelSet::is_empty) {
            return Err(Error::param("gt_objects", "voxel sets must be non-empty"));
        }
        let patient_score = pred_objects.iter().map(|p| p.confidence).fold(0.0, f64::max);
        Ok(Self {
            case_id: case_id.into(),
            patient_score,
            patient_label,
            pred_objects,
            gt_objects,
        })
    }
}

/// Patient scores and labels of `cases`, in order.
pub fn patient_scores<'a>(cases: impl IntoIterator<Item = &'a CaseResult>) -> (Vec<f64>, Vec<bool>) {
    cases.into_iter().map(|c| (c.patient_score, c.patient_label)).unzip()
}
