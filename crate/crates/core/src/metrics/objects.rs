//! Lesion candidates: thresholding, connected components and IoU matching.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume};

/// Neighbourhood used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u8", into = "u8"))]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face and edge neighbours.
    Eighteen,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(Error::param("connectivity", "must be 6, 18 or 26")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nonzero = (dx != 0) as u8 + (dy != 0) as u8 + (dz != 0) as u8;
                    let keep = match self {
                        Connectivity::Six => nonzero == 1,
                        Connectivity::Eighteen => nonzero == 1 || nonzero == 2,
                        Connectivity::TwentySix => nonzero >= 1,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

/// Sorted, duplicate-free linear voxel indices within one geometry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VoxelSet(Vec<usize>);

impl VoxelSet {
    pub fn new(mut voxels: Vec<usize>) -> Self {
        voxels.sort_unstable();
        voxels.dedup();
        Self(voxels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn intersection_len(&self, other: &VoxelSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        let (a, b) = (&self.0, &other.0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn iou(&self, other: &VoxelSet) -> f64 {
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// A connected region with the maximum probability inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedObject {
    pub voxels: VoxelSet,
    pub confidence: f64,
}

/// Binarise at `value ≥ threshold` and split into connected components.
///
/// Objects come out in scan order of their first voxel.
pub fn extract_objects(prob: &ScalarVolume, threshold: f64, connectivity: Connectivity) -> Result<Vec<DetectedObject>> {
    for (index, &value) in prob.data().iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::ProbabilityOutOfRange { index, value });
        }
    }
    let mask: Vec<bool> = prob.data().iter().map(|&v| v >= threshold).collect();
    Ok(components(&mask, prob.geometry(), connectivity)
        .into_iter()
        .map(|voxels| {
            let confidence = voxels.as_slice().iter().map(|&i| prob.data()[i]).fold(0.0, f64::max);
            DetectedObject { voxels, confidence }
        })
        .collect())
}

/// One voxel set per distinct non-zero label.
pub fn label_objects(labels: &LabelVolume) -> Vec<VoxelSet> {
    let mut by_label: alloc::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &l) in labels.data().iter().enumerate() {
        if l != 0 {
            by_label.entry(l).or_default().push(i);
        }
    }
    by_label.into_values().map(VoxelSet::new).collect()
}

fn components(mask: &[bool], geometry: &crate::volume::VolumeGeometry, connectivity: Connectivity) -> Vec<VoxelSet> {
    let shape = geometry.shape();
    let offsets = connectivity.offsets();
    let mut seen = vec![false; mask.len()];
    let mut queue = VecDeque::new();
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut voxels = Vec::new();
        while let Some(i) = queue.pop_front() {
            voxels.push(i);
            let p = geometry.coords(i);
            for d in &offsets {
                let q = [0, 1, 2].map(|a| p[a] as isize + d[a]);
                if (0..3).any(|a| q[a] < 0 || q[a] >= shape[a] as isize) {
                    continue;
                }
                let j = geometry.index(q[0] as usize, q[1] as usize, q[2] as usize);
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        out.push(VoxelSet::new(voxels));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchOutcome {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `(prediction index, ground-truth index, IoU)` in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Candidate pairs with `IoU ≥ threshold` (and non-empty overlap), sorted
/// in greedy matching order: IoU descending, then prediction confidence
/// descending, prediction index ascending, ground-truth index ascending.
pub(crate) fn candidate_pairs(
    pred: &[DetectedObject],
    gt: &[VoxelSet],
    iou_threshold: f64,
) -> Vec<(usize, usize, f64)> {
    let mut pairs = Vec::new();
    for (p, obj) in pred.iter().enumerate() {
        for (g, set) in gt.iter().enumerate() {
            if obj.voxels.intersection_len(set) == 0 {
                continue;
            }
            let iou = obj.voxels.iou(set);
            if iou >= iou_threshold {
                pairs.push((p, g, iou));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(pred[b.0].confidence.total_cmp(&pred[a.0].confidence))
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    pairs
}

/// Greedy one-to-one matching over pre-sorted candidates, restricted to the
/// predictions for which `active` is true.
pub(crate) fn greedy_match(
    candidates: &[(usize, usize, f64)],
    num_pred: usize,
    num_gt: usize,
    active: impl Fn(usize) -> bool,
) -> MatchOutcome {
    let mut pred_used = vec![false; num_pred];
    let mut gt_used = vec![false; num_gt];
    let mut pairs = Vec::new();
    for &(p, g, iou) in candidates {
        if !active(p) || pred_used[p] || gt_used[g] {
            continue;
        }
        pred_used[p] = true;
        gt_used[g] = true;
        pairs.push((p, g, iou));
    }
    let active_count = (0..num_pred).filter(|&p| active(p)).count();
    MatchOutcome {
        true_positives: pairs.len(),
        false_positives: active_count - pairs.len(),
        false_negatives: num_gt - pairs.len(),
        pairs,
    }
}

/// Match predictions to ground truth objects one-to-one by descending IoU.
pub fn match_objects(pred: &[DetectedObject], gt: &[VoxelSet], iou_threshold: f64) -> MatchOutcome {
    let candidates = candidate_pairs(pred, gt, iou_threshold);
    greedy_match(&candidates, pred.len(), gt.len(), |_| true)
}
