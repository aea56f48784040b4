use alloc::vec::Vec;

use super::objects::{candidate_pairs, greedy_match};
use super::CaseResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrocPoint {
    /// Predictions with `confidence ≥ threshold` survive.
    pub threshold: f64,
    pub fp_per_scan: f64,
    pub sensitivity: f64,
    pub true_positives: usize,
    pub false_positives: usize,
}

/// Lesion sensitivity against mean false positives per scan, one point per
/// distinct prediction confidence, ordered by descending threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
    pub num_cases: usize,
    pub num_lesions: usize,
}

/// Sensitivity and absolute detections at a false-positive budget.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OperatingPoint {
    pub sensitivity: f64,
    pub detected: usize,
    pub total: usize,
    pub fp_per_scan: f64,
    /// `None` when no curve point fits the budget.
    pub threshold: Option<f64>,
}

/// Sweep all distinct confidences; at each, surviving predictions are
/// re-matched case by case.
pub fn froc<'a>(cases: impl IntoIterator<Item = &'a CaseResult>, iou_threshold: f64) -> Result<FrocCurve> {
    let cases: Vec<&CaseResult> = cases.into_iter().collect();
    if cases.is_empty() {
        return Err(Error::Undefined("FROC needs at least one case".into()));
    }
    let num_lesions: usize = cases.iter().map(|c| c.gt_objects.len()).sum();
    if num_lesions == 0 {
        return Err(Error::Undefined(
            "no ground-truth lesions: sensitivity undefined".into(),
        ));
    }
    let candidates: Vec<_> = cases
        .iter()
        .map(|c| candidate_pairs(&c.pred_objects, &c.gt_objects, iou_threshold))
        .collect();
    let mut thresholds: Vec<f64> = cases
        .iter()
        .flat_map(|c| c.pred_objects.iter().map(|p| p.confidence))
        .collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let points = thresholds
        .into_iter()
        .map(|t| {
            let (mut tp, mut fp) = (0, 0);
            for (case, cand) in cases.iter().zip(&candidates) {
                let preds = &case.pred_objects;
                let m = greedy_match(cand, preds.len(), case.gt_objects.len(), |p| preds[p].confidence >= t);
                tp += m.true_positives;
                fp += m.false_positives;
            }
            FrocPoint {
                threshold: t,
                fp_per_scan: fp as f64 / cases.len() as f64,
                sensitivity: tp as f64 / num_lesions as f64,
                true_positives: tp,
                false_positives: fp,
            }
        })
        .collect();
    Ok(FrocCurve {
        points,
        num_cases: cases.len(),
        num_lesions,
    })
}

impl FrocCurve {
    /// Step interpolation: the last point (lowest threshold) whose FP rate
    /// stays within `fp_per_scan`.
    pub fn sensitivity_at_fp(&self, fp_per_scan: f64) -> OperatingPoint {
        match self.points.iter().rev().find(|p| p.fp_per_scan <= fp_per_scan) {
            Some(p) => OperatingPoint {
                sensitivity: p.sensitivity,
                detected: p.true_positives,
                total: self.num_lesions,
                fp_per_scan: p.fp_per_scan,
                threshold: Some(p.threshold),
            },
            None => OperatingPoint {
                sensitivity: 0.0,
                detected: 0,
                total: self.num_lesions,
                fp_per_scan: 0.0,
                threshold: None,
            },
        }
    }

    /// Mean of the step-interpolated sensitivity over `[0, max_fp]`.
    pub fn normalized_area(&self, max_fp: f64) -> f64 {
        if !(max_fp > 0.0) {
            return 0.0;
        }
        // breakpoints where the step function can change
        let mut xs: Vec<f64> = self
            .points
            .iter()
            .map(|p| p.fp_per_scan)
            .filter(|&f| f < max_fp)
            .collect();
        xs.push(0.0);
        xs.push(max_fp);
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.windows(2)
            .map(|w| (w[1] - w[0]) * self.sensitivity_at_fp(w[0]).sensitivity)
            .sum::<f64>()
            / max_fp
    }
}
