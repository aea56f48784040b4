//! Anatomy-informed displacement fields.
//!
//! For a set of organs with signed amplitudes `C_k` the field is
//!
//! ```text
//! V = Σ_k C_k · ∇(G_σ * S_k)
//! ```
//!
//! where `S_k` is the organ indicator and `G_σ` a truncated, sum-normalised
//! sampled Gaussian applied as three separable passes with half-sample
//! symmetric (reflect) padding. Because both the convolution and the
//! gradient are linear the organs are folded into a single weighted
//! indicator and smoothed once.
//!
//! The gradient is a per-voxel-step difference. In
//! [`AnisotropyMode::PhysicalIsotropic`] the kernel is isotropic in
//! millimetres and each gradient component is additionally multiplied by
//! `(sx / s_axis)²`, which turns the index-space gradient of a physically
//! isotropic potential into a displacement measured in voxels of that axis.
//! `C` is therefore calibrated in in-plane voxel units.
//!
//! The field kernel is truncated one voxel inside `truncation · σ` so that
//! kernel plus difference stencil never reach further than `truncation · σ`
//! from the organ: beyond that distance the field is exactly zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume, VectorField, Volume, VolumeGeometry};

const AXIS_NAMES: [char; 3] = ['x', 'y', 'z'];

/// How the in-plane σ maps onto the three axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AnisotropyMode {
    /// σ is given in in-plane voxels; other axes are rescaled by spacing so the
    /// kernel is isotropic in millimetres.
    #[default]
    PhysicalIsotropic,
    /// Same σ in voxels on every axis.
    VoxelIsotropic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SmoothingSpec {
    /// Gaussian σ in in-plane voxels.
    pub sigma_inplane: f64,
    pub anisotropy: AnisotropyMode,
    /// Kernel half-width in multiples of σ.
    pub truncation: f64,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self {
            sigma_inplane: 32.0,
            anisotropy: AnisotropyMode::PhysicalIsotropic,
            truncation: 4.0,
        }
    }
}

impl SmoothingSpec {
    pub fn voxel_isotropic(sigma: f64) -> Self {
        Self {
            sigma_inplane: sigma,
            anisotropy: AnisotropyMode::VoxelIsotropic,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_inplane.is_finite() && self.sigma_inplane > 0.0) {
            return Err(Error::param("sigma_inplane", "must be finite and > 0"));
        }
        if !(self.truncation.is_finite() && self.truncation > 0.0) {
            return Err(Error::param("truncation", "must be finite and > 0"));
        }
        Ok(())
    }

    /// σ in voxels along x, y, z.
    pub fn axis_sigmas(&self, geometry: &VolumeGeometry) -> [f64; 3] {
        let s = geometry.spacing();
        match self.anisotropy {
            AnisotropyMode::VoxelIsotropic => [self.sigma_inplane; 3],
            AnisotropyMode::PhysicalIsotropic => [
                self.sigma_inplane,
                self.sigma_inplane * s[0] / s[1],
                self.sigma_inplane * s[0] / s[2],
            ],
        }
    }

    /// Factor applied to each gradient component of the smoothed potential.
    fn gradient_metric(&self, geometry: &VolumeGeometry) -> [f64; 3] {
        let s = geometry.spacing();
        match self.anisotropy {
            AnisotropyMode::VoxelIsotropic => [1.0; 3],
            AnisotropyMode::PhysicalIsotropic => {
                let f = |a: usize| {
                    let r = s[0] / s[a];
                    r * r
                };
                [1.0, f(1), f(2)]
            }
        }
    }

    /// Largest whole-voxel offset within `truncation · σ`.
    pub fn reach(&self, sigma: f64) -> usize {
        libm::floor(self.truncation * sigma) as usize
    }
}

/// Sampled Gaussian with taps at `|i| ≤ truncation · σ`, normalised to sum 1.
///
/// The returned slice has odd length `2r + 1` with the centre tap at `r`.
pub fn gaussian_kernel(sigma: f64, truncation: f64) -> Vec<f64> {
    kernel_with_radius(sigma, libm::floor(truncation * sigma) as usize)
}

fn kernel_with_radius(sigma: f64, radius: usize) -> Vec<f64> {
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|j| {
            let d = j as f64 - radius as f64;
            libm::exp(-d * d / denom)
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Half-sample symmetric reflection of `i` into `0..n` (`… c b a | a b c … | c b a …`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let m = i.rem_euclid(2 * n);
    (if m < n { m } else { 2 * n - 1 - m }) as usize
}

/// `S_organ` as a {0, 1} volume.
pub fn rasterize_indicator(labels: &LabelVolume, organ_label: u32) -> Result<ScalarVolume> {
    if organ_label == 0 {
        return Err(Error::param("organ_label", "0 is background"));
    }
    Ok(labels.map(|&l| if l == organ_label { 1.0 } else { 0.0 }))
}

/// Separable Gaussian smoothing with reflect padding.
pub fn gaussian_smooth(vol: &ScalarVolume, spec: &SmoothingSpec) -> Result<ScalarVolume> {
    spec.validate()?;
    vol.ensure_finite()?;
    let sigmas = spec.axis_sigmas(vol.geometry());
    let kernels = sigmas.map(|s| gaussian_kernel(s, spec.truncation));
    Ok(smooth_separable(vol, &kernels))
}

pub(crate) fn smooth_separable(vol: &ScalarVolume, kernels: &[Vec<f64>; 3]) -> ScalarVolume {
    let geometry = *vol.geometry();
    let [nx, ny, nz] = geometry.shape();
    let mut a = vol.data().to_vec();
    let mut b = vec![0.0; a.len()];
    pass_x(&a, &mut b, nx, &kernels[0]);
    pass_outer(&b, &mut a, nx, ny, nx * ny, &kernels[1]);
    pass_outer(&a, &mut b, nx * ny, nz, a.len(), &kernels[2]);
    Volume::from_vec(geometry, b).expect("length preserved")
}

/// Convolution along contiguous lines of length `nx`.
fn pass_x(src: &[f64], dst: &mut [f64], nx: usize, kernel: &[f64]) {
    let r = kernel.len() / 2;
    let mut padded = vec![0.0; nx + 2 * r];
    for (line, out) in src.chunks_exact(nx).zip(dst.chunks_exact_mut(nx)) {
        if line.iter().all(|&v| v == 0.0) {
            out.fill(0.0);
            continue;
        }
        for (j, p) in padded.iter_mut().enumerate() {
            *p = line[reflect(j as isize - r as isize, nx)];
        }
        let centre = kernel[r];
        for (o, &v) in out.iter_mut().zip(&padded[r..r + nx]) {
            *o = centre * v;
        }
        for k in 1..=r {
            let w = kernel[r + k];
            let lo = &padded[r - k..r - k + nx];
            let hi = &padded[r + k..r + k + nx];
            for ((o, &l), &h) in out.iter_mut().zip(lo).zip(hi) {
                *o += w * (l + h);
            }
        }
    }
}

/// Convolution along an outer axis: inside each block of `block_len`
/// elements there are `count` consecutive units of `unit_len` elements, and
/// output unit `j` is the kernel-weighted sum of input units around `j`.
fn pass_outer(src: &[f64], dst: &mut [f64], unit_len: usize, count: usize, block_len: usize, kernel: &[f64]) {
    let r = kernel.len() as isize / 2;
    let mut nonzero = vec![false; count];
    for (block_in, block_out) in src.chunks_exact(block_len).zip(dst.chunks_exact_mut(block_len)) {
        for (j, flag) in nonzero.iter_mut().enumerate() {
            *flag = block_in[j * unit_len..(j + 1) * unit_len].iter().any(|&v| v != 0.0);
        }
        for (j, out) in block_out.chunks_exact_mut(unit_len).enumerate() {
            out.fill(0.0);
            for t in -r..=r {
                let s = reflect(j as isize + t, count);
                if !nonzero[s] {
                    continue;
                }
                let w = kernel[(t + r) as usize];
                let unit = &block_in[s * unit_len..(s + 1) * unit_len];
                for (o, &v) in out.iter_mut().zip(unit) {
                    *o += w * v;
                }
            }
        }
    }
}

/// Per-voxel-step gradient: central differences inside, one-sided at faces.
pub fn spatial_gradient(vol: &ScalarVolume) -> Result<VectorField> {
    let geometry = *vol.geometry();
    let shape = geometry.shape();
    for (axis, &len) in shape.iter().enumerate() {
        if len < 2 {
            return Err(Error::AxisTooShort {
                axis: AXIS_NAMES[axis],
                len,
            });
        }
    }
    let comps = [0, 1, 2].map(|axis| axis_difference(vol.data(), &geometry, axis));
    VectorField::from_components(geometry, comps)
}

/// Derivative of `data` along `axis`; an axis of length 1 yields zeros.
pub(crate) fn axis_difference(data: &[f64], geometry: &VolumeGeometry, axis: usize) -> Vec<f64> {
    let n = geometry.shape()[axis];
    let stride = geometry.strides()[axis];
    let mut out = vec![0.0; data.len()];
    if n < 2 {
        return out;
    }
    // Split the volume into (outer, axis, inner) with inner = stride.
    let outer = data.len() / (n * stride);
    for o in 0..outer {
        let base = o * n * stride;
        for c in 0..n {
            let row = base + c * stride;
            let (lo, hi, scale) = if c == 0 {
                (row, row + stride, 1.0)
            } else if c == n - 1 {
                (row - stride, row, 1.0)
            } else {
                (row - stride, row + stride, 0.5)
            };
            for i in 0..stride {
                out[row + i] = (data[hi + i] - data[lo + i]) * scale;
            }
        }
    }
    out
}

/// `Σ_k C_k · ∇(G_σ * S_k)` for the given `(organ label, amplitude)` pairs.
///
/// Organs absent from `labels`, an empty list or all-zero amplitudes give
/// the zero field.
pub fn anatomy_field(labels: &LabelVolume, organs: &[(u32, f64)], spec: &SmoothingSpec) -> Result<VectorField> {
    spec.validate()?;
    for (i, &(label, amplitude)) in organs.iter().enumerate() {
        if label == 0 {
            return Err(Error::param("organ_label", "0 is background"));
        }
        if !amplitude.is_finite() {
            return Err(Error::param("amplitude", "must be finite"));
        }
        if organs[..i].iter().any(|&(l, _)| l == label) {
            return Err(Error::DuplicateOrgan(label));
        }
    }
    let geometry = *labels.geometry();
    if organs.iter().all(|&(_, c)| c == 0.0) {
        return Ok(VectorField::zeros(geometry));
    }

    let weighted = labels.map(|&l| organs.iter().find(|&&(organ, _)| organ == l).map_or(0.0, |&(_, c)| c));
    let kernels = spec
        .axis_sigmas(&geometry)
        .map(|s| kernel_with_radius(s, spec.reach(s).saturating_sub(1)));
    let potential = smooth_separable(&weighted, &kernels);
    let mut field = spatial_gradient(&potential)?;
    for (axis, factor) in spec.gradient_metric(&geometry).into_iter().enumerate() {
        if factor != 1.0 {
            field.component_mut(axis).iter_mut().for_each(|v| *v *= factor);
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: [usize; 3]) -> VolumeGeometry {
        VolumeGeometry::isotropic(n).unwrap()
    }

    #[test]
    fn reflect_is_half_sample_symmetric() {
        let got: Vec<usize> = (-4..8).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, [3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(reflect(-3, 1), 0);
        assert_eq!(reflect(17, 1), 0);
    }

    #[test]
    fn kernel_is_normalised_and_symmetric() {
        let k = gaussian_kernel(2.0, 4.0);
        assert_eq!(k.len(), 17);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..8 {
            assert_eq!(k[i], k[16 - i]);
        }
        assert_eq!(gaussian_kernel(0.1, 4.0), vec![1.0]);
    }

    #[test]
    fn axis_sigmas_follow_spacing() {
        let g = VolumeGeometry::new([4, 4, 4], [0.3125, 0.3125, 3.0]).unwrap();
        let s = SmoothingSpec::default().axis_sigmas(&g);
        assert_eq!(s[0], 32.0);
        assert_eq!(s[1], 32.0);
        assert!((s[2] - 32.0 * 0.3125 / 3.0).abs() < 1e-12);
        assert_eq!(SmoothingSpec::voxel_isotropic(3.0).axis_sigmas(&g), [3.0; 3]);
    }

    #[test]
    fn invalid_spec_rejected() {
        let v = ScalarVolume::zeros(geom([3, 3, 3]));
        let mut s = SmoothingSpec::voxel_isotropic(0.0);
        assert!(gaussian_smooth(&v, &s).is_err());
        s.sigma_inplane = 1.0;
        s.truncation = -1.0;
        assert!(gaussian_smooth(&v, &s).is_err());
    }

    #[test]
    fn smoothing_rejects_non_finite() {
        let mut v = ScalarVolume::zeros(geom([3, 3, 3]));
        v.data_mut()[5] = f64::INFINITY;
        assert_eq!(
            gaussian_smooth(&v, &SmoothingSpec::voxel_isotropic(1.0)),
            Err(Error::NonFinite { index: 5 })
        );
    }

    #[test]
    fn zero_and_constant_volumes() {
        let g = VolumeGeometry::new([7, 5, 4], [1.0, 1.0, 2.5]).unwrap();
        let spec = SmoothingSpec {
            sigma_inplane: 3.0,
            ..SmoothingSpec::default()
        };
        let z = gaussian_smooth(&ScalarVolume::zeros(g), &spec).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        // radius 12 exceeds every axis length: padding reflects repeatedly
        let c = gaussian_smooth(&ScalarVolume::filled(g, 4.25), &spec).unwrap();
        for &v in c.data() {
            assert!((v - 4.25).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn gradient_of_constant_and_ramp() {
        let g = geom([5, 4, 3]);
        let c = spatial_gradient(&ScalarVolume::filled(g, 2.0)).unwrap();
        assert!(c.is_zero());
        let ramp = ScalarVolume::from_fn(g, |x, _, _| x as f64);
        let f = spatial_gradient(&ramp).unwrap();
        for i in 0..g.len() {
            assert_eq!(f.at(i), [1.0, 0.0, 0.0]);
        }
        let zr = ScalarVolume::from_fn(g, |_, _, z| (z * z) as f64);
        let f = spatial_gradient(&zr).unwrap();
        assert_eq!(f.component(2)[g.index(0, 0, 0)], 1.0);
        assert_eq!(f.component(2)[g.index(0, 0, 1)], 2.0);
        assert_eq!(f.component(2)[g.index(0, 0, 2)], 3.0);
    }

    #[test]
    fn gradient_rejects_single_voxel_axis() {
        let v = ScalarVolume::zeros(geom([4, 1, 4]));
        assert_eq!(spatial_gradient(&v), Err(Error::AxisTooShort { axis: 'y', len: 1 }));
    }

    #[test]
    fn indicator_counts_match_scan() {
        let g = geom([6, 5, 4]);
        let labels = LabelVolume::from_fn(g, |x, y, z| ((x + 2 * y + 3 * z) % 3) as u32);
        let ind = rasterize_indicator(&labels, 2).unwrap();
        let mut expected = 0;
        for z in 0..4 {
            for y in 0..5 {
                for x in 0..6 {
                    let is = (x + 2 * y + 3 * z) % 3 == 2;
                    expected += is as usize;
                    assert_eq!(*ind.get(x, y, z), if is { 1.0 } else { 0.0 });
                }
            }
        }
        assert_eq!(ind.data().iter().filter(|&&v| v == 1.0).count(), expected);
        assert!(rasterize_indicator(&labels, 0).is_err());
        let empty = rasterize_indicator(&labels, 9).unwrap();
        assert!(empty.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn anatomy_field_rejects_duplicates_and_handles_empty() {
        let g = geom([8, 8, 8]);
        let labels = LabelVolume::from_fn(g, |x, _, _| (x > 3) as u32);
        let spec = SmoothingSpec::voxel_isotropic(1.5);
        assert_eq!(
            anatomy_field(&labels, &[(1, 2.0), (1, 3.0)], &spec),
            Err(Error::DuplicateOrgan(1))
        );
        assert!(anatomy_field(&labels, &[(1, f64::NAN)], &spec).is_err());
        assert!(anatomy_field(&labels, &[], &spec).unwrap().is_zero());
        assert!(anatomy_field(&labels, &[(1, 0.0)], &spec).unwrap().is_zero());
        // absent organ
        assert!(anatomy_field(&labels, &[(5, 100.0)], &spec).unwrap().is_zero());
    }

    #[test]
    fn positive_amplitude_points_away_from_organ() {
        // Gradient of the smoothed indicator points into the organ; with the
        // backward warp x + V a positive C samples from inside the organ,
        // which grows it.
        let g = geom([24, 8, 8]);
        let labels = LabelVolume::from_fn(g, |x, _, _| (x < 8) as u32);
        let f = anatomy_field(&labels, &[(1, 10.0)], &SmoothingSpec::voxel_isotropic(2.0)).unwrap();
        let vx = f.component(0)[g.index(9, 4, 4)];
        assert!(vx < 0.0, "{vx}");
    }

    #[test]
    fn field_support_is_bounded_by_truncation() {
        let g = geom([40, 5, 5]);
        let labels = LabelVolume::from_fn(g, |x, _, _| (x == 5) as u32);
        let spec = SmoothingSpec::voxel_isotropic(2.5);
        let f = anatomy_field(&labels, &[(1, 1e6)], &spec).unwrap();
        for x in 0..40 {
            let v = f.component(0)[g.index(x, 2, 2)];
            let d = (x as isize - 5).unsigned_abs();
            if d > 10 {
                assert_eq!(v, 0.0, "x={x}");
            }
        }
        assert_ne!(f.component(0)[g.index(15, 2, 2)], 0.0);
    }
}
