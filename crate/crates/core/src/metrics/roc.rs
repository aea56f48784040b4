use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RocPoint {
    /// Cases with `score ≥ threshold` are called positive. The first point
    /// uses `+∞`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Empirical ROC from `(0, 0)` to `(1, 1)`, one point per distinct score.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PartialAuc {
    /// Area under the ROC and above `TPR = floor`.
    pub raw: f64,
    /// `raw / (1 - floor)`; 1 for a perfect classifier.
    pub normalized: f64,
    pub floor: f64,
}

fn validate(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::param("scores", "scores and labels differ in length"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::param("scores", "scores must be finite"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("ROC needs both positive and negative cases".into()));
    }
    Ok((pos, neg))
}

/// `(threshold, tp, fp)` at each distinct score, highest threshold first.
fn sweep(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0, 0);
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            out.push((scores[i], tp, fp));
        }
    }
    out
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = validate(scores, labels)?;
    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    points.extend(sweep(scores, labels).into_iter().map(|(t, tp, fp)| RocPoint {
        threshold: t,
        fpr: fp as f64 / neg as f64,
        tpr: tp as f64 / pos as f64,
    }));
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Trapezoidal area under the whole curve.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
            .sum()
    }

    /// Area of the region below the (linearly interpolated) curve and above
    /// the horizontal line `TPR = floor`.
    pub fn partial_auc(&self, floor: f64) -> Result<PartialAuc> {
        if !(0.0..1.0).contains(&floor) {
            return Err(Error::param("sensitivity_floor", "must lie in [0, 1)"));
        }
        let raw: f64 = self
            .points
            .windows(2)
            .map(|w| clipped_segment_area(w[0].fpr, w[0].tpr, w[1].fpr, w[1].tpr, floor))
            .sum();
        Ok(PartialAuc {
            raw,
            normalized: raw / (1.0 - floor),
            floor,
        })
    }
}

/// `∫ max(t(f) - floor, 0) df` over one segment with `t` linear in `f`.
fn clipped_segment_area(f0: f64, t0: f64, f1: f64, t1: f64, floor: f64) -> f64 {
    let width = f1 - f0;
    if width == 0.0 {
        return 0.0;
    }
    let (a, b) = (t0 - floor, t1 - floor);
    if a >= 0.0 && b >= 0.0 {
        width * 0.5 * (a + b)
    } else if a <= 0.0 && b <= 0.0 {
        0.0
    } else {
        // one end above the floor: triangle from the crossing point
        let above = a.max(b);
        let frac = above / (above - a.min(b));
        width * frac * 0.5 * above
    }
}

pub fn roc_and_pauroc(scores: &[f64], labels: &[bool], sensitivity_floor: f64) -> Result<(RocCurve, PartialAuc)> {
    let curve = roc_curve(scores, labels)?;
    let pauc = curve.partial_auc(sensitivity_floor)?;
    Ok((curve, pauc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct F1AtSensitivity {
    pub f1: f64,
    /// Operating threshold (`score ≥ threshold` is positive).
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// F1 at the highest threshold whose sensitivity reaches `target`.
///
/// Sensitivity is compared with a 1e-12 slack so that targets such as
/// 0.875 are met exactly by 7 of 8 positives despite rounding.
pub fn f1_at_sensitivity(scores: &[f64], labels: &[bool], target_sensitivity: f64) -> Result<F1AtSensitivity> {
    let (pos, _) = validate(scores, labels)?;
    if !(0.0..=1.0).contains(&target_sensitivity) {
        return Err(Error::param("target_sensitivity", "must lie in [0, 1]"));
    }
    let (threshold, tp, fp) = sweep(scores, labels)
        .into_iter()
        .find(|&(_, tp, _)| tp as f64 / pos as f64 >= target_sensitivity - 1e-12)
        .expect("the lowest threshold has sensitivity 1");
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / pos as f64;
    let f1 = 2.0 * tp as f64 / (2 * tp + fp + (pos - tp)) as f64;
    Ok(F1AtSensitivity {
        f1,
        threshold,
        precision,
        recall,
    })
}
