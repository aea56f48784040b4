//! Random augmentation policy: amplitude draws, the random-elastic baseline,
//! organ-offset cropping and the end-to-end augment step.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::field::{anatomy_field, axis_difference, gaussian_smooth, SmoothingSpec};
use crate::volume::{LabelVolume, MultiChannelVolume, ScalarVolume, VectorField, Volume, VolumeGeometry};
use crate::warp::{warp_image, warp_labels, BoundaryMode, InterpolationMode};

/// Label ids used by the default configuration.
pub const RECTUM: u32 = 1;
pub const BLADDER: u32 = 2;
pub const PROSTATE: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct OrganAmplitudeSpec {
    pub label: u32,
    /// Amplitudes are drawn from `[-c_max, c_max]`.
    pub c_max: f64,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub name: Option<String>,
}

impl OrganAmplitudeSpec {
    pub fn new(label: u32, c_max: f64) -> Self {
        Self {
            label,
            c_max,
            name: None,
        }
    }

    fn named(label: u32, c_max: f64, name: &str) -> Self {
        Self {
            label,
            c_max,
            name: Some(name.into()),
        }
    }
}

/// Distribution of the per-organ amplitude once the augmentation fires.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)
)]
pub enum AmplitudeSampling {
    /// Uniform on `[-c_max, c_max]`.
    #[default]
    Continuous,
    /// Uniform over `{±l : l ∈ levels, l ≤ c_max}`.
    Discrete { levels: Vec<f64> },
}

impl AmplitudeSampling {
    /// The amplitude levels swept during hyperparameter search.
    pub fn sweep_levels() -> Self {
        AmplitudeSampling::Discrete {
            levels: vec![300.0, 600.0, 900.0, 1200.0, 1500.0],
        }
    }
}

/// Random-elastic comparison scheme: uniform noise in `[-alpha, alpha]` per
/// component, smoothed with a voxel-isotropic Gaussian of `sigma` voxels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ElasticBaseline {
    pub alpha: f64,
    pub sigma: f64,
}

/// Crop margins in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct CropOffsets {
    /// Through-plane margin around the prostate.
    pub axial_mm: f64,
    /// In-plane margin around prostate, rectum and bladder.
    pub inplane_mm: f64,
}

impl Default for CropOffsets {
    fn default() -> Self {
        Self {
            axial_mm: 9.0,
            inplane_mm: 11.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct AugmentationConfig {
    pub organs: Vec<OrganAmplitudeSpec>,
    pub smoothing: SmoothingSpec,
    /// Chance that one sample is deformed at all.
    pub probability: f64,
    pub sampling: AmplitudeSampling,
    pub elastic_baseline: Option<ElasticBaseline>,
    pub crop_offsets: CropOffsets,
    pub interpolation: InterpolationMode,
    pub boundary: BoundaryMode,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            organs: vec![
                OrganAmplitudeSpec::named(RECTUM, 1200.0, "rectum"),
                OrganAmplitudeSpec::named(BLADDER, 600.0, "bladder"),
            ],
            smoothing: SmoothingSpec::default(),
            probability: 0.2,
            sampling: AmplitudeSampling::Continuous,
            elastic_baseline: None,
            crop_offsets: CropOffsets::default(),
            interpolation: InterpolationMode::Trilinear,
            boundary: BoundaryMode::ClampToEdge,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        self.smoothing.validate()?;
        self.boundary.validate()?;
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::param("probability", "must lie in [0, 1]"));
        }
        for (i, organ) in self.organs.iter().enumerate() {
            if organ.label == 0 {
                return Err(Error::param("organs", "label 0 is background"));
            }
            if !(organ.c_max.is_finite() && organ.c_max > 0.0) {
                return Err(Error::param("c_max", "must be finite and > 0"));
            }
            if self.organs[..i].iter().any(|o| o.label == organ.label) {
                return Err(Error::DuplicateOrgan(organ.label));
            }
            if let AmplitudeSampling::Discrete { levels } = &self.sampling {
                if !levels.iter().any(|&l| l <= organ.c_max) {
                    return Err(Error::param(
                        "sampling.levels",
                        alloc::format!("no level ≤ c_max {} of organ {}", organ.c_max, organ.label),
                    ));
                }
            }
        }
        if let AmplitudeSampling::Discrete { levels } = &self.sampling {
            if levels.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
                return Err(Error::param("sampling.levels", "levels must be finite and > 0"));
            }
        }
        if let Some(e) = &self.elastic_baseline {
            check_elastic(e.alpha, e.sigma)?;
        }
        let o = &self.crop_offsets;
        if !(o.axial_mm.is_finite() && o.axial_mm >= 0.0 && o.inplane_mm.is_finite() && o.inplane_mm >= 0.0) {
            return Err(Error::param("crop_offsets", "offsets must be finite and ≥ 0"));
        }
        Ok(())
    }
}

fn check_elastic(alpha: f64, sigma: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::param("alpha", "must be finite and ≥ 0"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("sigma", "must be finite and > 0"));
    }
    Ok(())
}

/// Image plus its lesion and organ segmentations on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub image: MultiChannelVolume,
    pub lesions: LabelVolume,
    pub organs: LabelVolume,
}

impl TrainingSample {
    pub fn new(image: MultiChannelVolume, lesions: LabelVolume, organs: LabelVolume) -> Result<Self> {
        image.geometry().ensure_same(lesions.geometry())?;
        image.geometry().ensure_same(organs.geometry())?;
        Ok(Self { image, lesions, organs })
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        self.image.geometry()
    }
}

/// Outcome of the Bernoulli gate plus per-organ draws.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AmplitudeDraw {
    Skip,
    /// `(organ label, C)` in configuration order.
    Apply(Vec<(u32, f64)>),
}

/// One gate draw, then (if it fires) one independent draw per organ.
pub fn sample_amplitudes<R: Rng + ?Sized>(config: &AugmentationConfig, rng: &mut R) -> AmplitudeDraw {
    let fire: f64 = rng.gen();
    if fire >= config.probability {
        return AmplitudeDraw::Skip;
    }
    let amplitudes = config
        .organs
        .iter()
        .map(|organ| {
            let c = match &config.sampling {
                AmplitudeSampling::Continuous => rng.gen_range(-organ.c_max..=organ.c_max),
                AmplitudeSampling::Discrete { levels } => {
                    let allowed: Vec<f64> = levels.iter().copied().filter(|&l| l <= organ.c_max).collect();
                    let pick = rng.gen_range(0..2 * allowed.len());
                    let level = allowed[pick / 2];
                    if pick % 2 == 0 {
                        level
                    } else {
                        -level
                    }
                }
            };
            (organ.label, c)
        })
        .collect();
    AmplitudeDraw::Apply(amplitudes)
}

/// Smoothed uniform-noise displacement field.
pub fn random_elastic_field<R: Rng + ?Sized>(
    geometry: VolumeGeometry,
    alpha: f64,
    sigma_e: f64,
    rng: &mut R,
) -> Result<VectorField> {
    check_elastic(alpha, sigma_e)?;
    if alpha == 0.0 {
        return Ok(VectorField::zeros(geometry));
    }
    let spec = SmoothingSpec::voxel_isotropic(sigma_e);
    let mut comps: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for c in &mut comps {
        let noise: Vec<f64> = (0..geometry.len()).map(|_| rng.gen_range(-alpha..=alpha)).collect();
        *c = gaussian_smooth(&ScalarVolume::from_vec(geometry, noise)?, &spec)?.into_vec();
    }
    VectorField::from_components(geometry, comps)
}

/// Half-open voxel box `start..end` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CropBox {
    pub start: [usize; 3],
    pub end: [usize; 3],
}

impl CropBox {
    pub fn shape(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.end[a] - self.start[a])
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| self.start[a] <= p[a] && p[a] < self.end[a])
    }
}

fn margin_voxels(mm: f64, spacing: f64) -> usize {
    // outward rounding, tolerant of representation error in exact ratios
    libm::ceil(mm / spacing - 1e-9).max(0.0) as usize
}

/// Crop box: the prostate's z-extent padded by `axial_mm`, and the in-plane
/// extent of prostate ∪ adjacent organs padded by `inplane_mm`, clamped to
/// the grid. Margins are converted to voxels rounding outward.
pub fn crop_box(
    organs: &LabelVolume,
    prostate_label: u32,
    adjacent_labels: &[u32],
    offsets: &CropOffsets,
) -> Result<CropBox> {
    let g = organs.geometry();
    let mut prostate: Option<([usize; 3], [usize; 3])> = None;
    let mut inplane: Option<([usize; 2], [usize; 2])> = None;
    for (i, &l) in organs.data().iter().enumerate() {
        let is_prostate = l == prostate_label;
        if !is_prostate && !adjacent_labels.contains(&l) {
            continue;
        }
        let p = g.coords(i);
        if is_prostate {
            let b = prostate.get_or_insert((p, p));
            for a in 0..3 {
                b.0[a] = b.0[a].min(p[a]);
                b.1[a] = b.1[a].max(p[a]);
            }
        }
        let b = inplane.get_or_insert(([p[0], p[1]], [p[0], p[1]]));
        for a in 0..2 {
            b.0[a] = b.0[a].min(p[a]);
            b.1[a] = b.1[a].max(p[a]);
        }
    }
    let (pmin, pmax) = prostate.ok_or(Error::MissingLabel(prostate_label))?;
    let (imin, imax) = inplane.expect("prostate voxels are in the union");
    let shape = g.shape();
    let spacing = g.spacing();
    let lo = [imin[0], imin[1], pmin[2]];
    let hi = [imax[0], imax[1], pmax[2]];
    let pad = [
        margin_voxels(offsets.inplane_mm, spacing[0]),
        margin_voxels(offsets.inplane_mm, spacing[1]),
        margin_voxels(offsets.axial_mm, spacing[2]),
    ];
    Ok(CropBox {
        start: [0, 1, 2].map(|a| lo[a].saturating_sub(pad[a])),
        end: [0, 1, 2].map(|a| (hi[a] + pad[a] + 1).min(shape[a])),
    })
}

fn crop_grid<T: Copy>(data: &[T], geometry: &VolumeGeometry, b: &CropBox) -> Vec<T> {
    let [sx, sy, sz] = b.shape();
    let mut out = Vec::with_capacity(sx * sy * sz);
    for z in b.start[2]..b.end[2] {
        for y in b.start[1]..b.end[1] {
            let row = geometry.index(b.start[0], y, z);
            out.extend_from_slice(&data[row..row + sx]);
        }
    }
    out
}

/// Crop image, lesions and organs with the same [`crop_box`].
pub fn crop_region(
    sample: &TrainingSample,
    prostate_label: u32,
    adjacent_labels: &[u32],
    offsets: &CropOffsets,
) -> Result<TrainingSample> {
    let b = crop_box(&sample.organs, prostate_label, adjacent_labels, offsets)?;
    let g = sample.geometry();
    let cropped = VolumeGeometry::new(b.shape(), g.spacing())?;
    let channels = sample.image.channels().iter().map(|c| crop_grid(c, g, &b)).collect();
    TrainingSample::new(
        MultiChannelVolume::new(cropped, channels)?,
        Volume::from_vec(cropped, crop_grid(sample.lesions.data(), g, &b))?,
        Volume::from_vec(cropped, crop_grid(sample.organs.data(), g, &b))?,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub sample: TrainingSample,
    pub draw: AmplitudeDraw,
    /// The applied field; `None` when the gate skipped.
    pub field: Option<VectorField>,
}

/// Draw amplitudes and, unless the gate skips, deform the sample.
pub fn augment<R: Rng + ?Sized>(
    sample: &TrainingSample,
    config: &AugmentationConfig,
    rng: &mut R,
) -> Result<Augmented> {
    config.validate()?;
    match sample_amplitudes(config, rng) {
        AmplitudeDraw::Skip => Ok(Augmented {
            sample: sample.clone(),
            draw: AmplitudeDraw::Skip,
            field: None,
        }),
        AmplitudeDraw::Apply(amplitudes) => {
            let (deformed, field) = augment_with_amplitudes(sample, &amplitudes, config)?;
            Ok(Augmented {
                sample: deformed,
                draw: AmplitudeDraw::Apply(amplitudes),
                field: Some(field),
            })
        }
    }
}

/// Deterministic part of [`augment`]: build the anatomy field for the given
/// amplitudes and warp image and both label maps with it.
pub fn augment_with_amplitudes(
    sample: &TrainingSample,
    amplitudes: &[(u32, f64)],
    config: &AugmentationConfig,
) -> Result<(TrainingSample, VectorField)> {
    let field = anatomy_field(&sample.organs, amplitudes, &config.smoothing)?;
    let deformed = apply_field(sample, &field, config.interpolation, config.boundary)?;
    Ok((deformed, field))
}

/// Warp the image with `interp` and both label maps nearest-neighbour, all
/// with the same field.
pub fn apply_field(
    sample: &TrainingSample,
    field: &VectorField,
    interp: InterpolationMode,
    boundary: BoundaryMode,
) -> Result<TrainingSample> {
    TrainingSample::new(
        warp_image(&sample.image, field, interp, boundary)?,
        warp_labels(&sample.lesions, field)?,
        warp_labels(&sample.organs, field)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldoverReport {
    /// Share of voxels whose Jacobian determinant is ≤ 0.
    pub fraction: f64,
    pub folded: usize,
    pub min_determinant: f64,
    pub max_determinant: f64,
}

/// Jacobian determinant of `x ↦ x + V(x)` per voxel.
///
/// Uses the same central/one-sided differences as the field gradient; an
/// axis of length 1 contributes no derivative.
pub fn jacobian_determinants(field: &VectorField) -> Vec<f64> {
    let g = field.geometry();
    // d[i][j] = ∂V_i / ∂x_j
    let d: [[Vec<f64>; 3]; 3] = [0, 1, 2].map(|i| [0, 1, 2].map(|j| axis_difference(field.component(i), g, j)));
    (0..g.len())
        .map(|v| {
            let m = |i: usize, j: usize| d[i][j][v] + if i == j { 1.0 } else { 0.0 };
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
        })
        .collect()
}

pub fn foldover_diagnostic(field: &VectorField) -> FoldoverReport {
    let dets = jacobian_determinants(field);
    let folded = dets.iter().filter(|&&d| d <= 0.0).count();
    FoldoverReport {
        fraction: folded as f64 / dets.len() as f64,
        folded,
        min_determinant: dets.iter().copied().fold(f64::INFINITY, f64::min),
        max_determinant: dets.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}
