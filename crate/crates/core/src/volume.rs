//! Voxel grids bound to a physical geometry.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Grid shape in voxels plus physical spacing (mm per voxel) along each axis.
///
/// Axes are ordered x, y, z; z is the through-plane axis of an axial MR
/// acquisition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VolumeGeometry {
    shape: [usize; 3],
    spacing: [f64; 3],
}

impl VolumeGeometry {
    pub fn new(shape: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidGeometry(alloc::format!(
                "shape {shape:?} has an empty axis"
            )));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidGeometry(alloc::format!(
                "spacing {spacing:?} must be finite and positive"
            )));
        }
        shape
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| Error::InvalidGeometry(alloc::format!("shape {shape:?} overflows")))?;
        Ok(Self { shape, spacing })
    }

    /// Unit-spaced geometry.
    pub fn isotropic(shape: [usize; 3]) -> Result<Self> {
        Self::new(shape, [1.0; 3])
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    /// Never true for a validated geometry.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-plane spacing over through-plane spacing (`sx / sz`).
    pub fn spacing_ratio(&self) -> f64 {
        self.spacing[0] / self.spacing[2]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.shape[0] && y < self.shape[1] && z < self.shape[2]);
        x + self.shape[0] * (y + self.shape[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.shape;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Element stride of each axis in the linear layout.
    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [1, self.shape[0], self.shape[0] * self.shape[1]]
    }

    pub(crate) fn ensure_same(&self, other: &VolumeGeometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                expected: *self,
                found: *other,
            })
        }
    }
}

/// A single-valued grid over a [`VolumeGeometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    geometry: VolumeGeometry,
    data: Vec<T>,
}

/// Real-valued volume: one image channel, a probability map, a smoothed indicator.
pub type ScalarVolume = Volume<f64>;

/// Integer label map; 0 is background.
pub type LabelVolume = Volume<u32>;

impl<T> Volume<T> {
    pub fn from_vec(geometry: VolumeGeometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::DataLength {
                expected: geometry.len(),
                found: data.len(),
            });
        }
        Ok(Self { geometry, data })
    }

    pub fn from_fn(geometry: VolumeGeometry, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let [nx, ny, nz] = geometry.shape();
        let mut data = Vec::with_capacity(geometry.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { geometry, data }
    }

    #[inline]
    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.geometry.index(x, y, z)]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize, z: usize) -> &mut T {
        let i = self.geometry.index(x, y, z);
        &mut self.data[i]
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Volume<U> {
        Volume {
            geometry: self.geometry,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> Volume<T> {
    pub fn filled(geometry: VolumeGeometry, value: T) -> Self {
        Self {
            data: vec![value; geometry.len()],
            geometry,
        }
    }
}

impl ScalarVolume {
    pub fn zeros(geometry: VolumeGeometry) -> Self {
        Self::filled(geometry, 0.0)
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }
}

impl LabelVolume {
    /// Sorted distinct label ids, background included if present.
    pub fn label_set(&self) -> Vec<u32> {
        let mut labels: Vec<u32> = self.data.clone();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    pub fn count(&self, label: u32) -> usize {
        self.data.iter().filter(|&&l| l == label).count()
    }
}

/// Several intensity channels sharing one geometry (e.g. T2w and ADC).
///
/// Channels are held channel-major: each channel is its own contiguous grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelVolume {
    geometry: VolumeGeometry,
    channels: Vec<Vec<f64>>,
}

impl MultiChannelVolume {
    pub fn new(geometry: VolumeGeometry, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::param("channels", "at least one channel is required"));
        }
        for c in &channels {
            if c.len() != geometry.len() {
                return Err(Error::DataLength {
                    expected: geometry.len(),
                    found: c.len(),
                });
            }
        }
        Ok(Self { geometry, channels })
    }

    pub fn from_scalar(vol: ScalarVolume) -> Self {
        let geometry = vol.geometry;
        Self {
            geometry,
            channels: vec![vol.data],
        }
    }

    #[inline]
    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn channel_volume(&self, c: usize) -> ScalarVolume {
        Volume {
            geometry: self.geometry,
            data: self.channels[c].clone(),
        }
    }
}

/// Per-voxel displacement in voxel units along each axis.
///
/// A zero field is the identity transform.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    geometry: VolumeGeometry,
    components: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(geometry: VolumeGeometry) -> Self {
        let n = geometry.len();
        Self {
            geometry,
            components: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    pub fn from_components(geometry: VolumeGeometry, components: [Vec<f64>; 3]) -> Result<Self> {
        for c in &components {
            if c.len() != geometry.len() {
                return Err(Error::DataLength {
                    expected: geometry.len(),
                    found: c.len(),
                });
            }
        }
        Ok(Self { geometry, components })
    }

    /// Spatially constant displacement.
    pub fn constant(geometry: VolumeGeometry, v: [f64; 3]) -> Self {
        let n = geometry.len();
        Self {
            geometry,
            components: [vec![v[0]; n], vec![v[1]; n], vec![v[2]; n]],
        }
    }

    #[inline]
    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    #[inline]
    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    #[inline]
    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>; 3] {
        &self.components
    }

    pub fn into_components(self) -> [Vec<f64>; 3] {
        self.components
    }

    #[inline]
    pub fn at(&self, index: usize) -> [f64; 3] {
        [
            self.components[0][index],
            self.components[1][index],
            self.components[2][index],
        ]
    }

    #[inline]
    pub fn magnitude(&self, index: usize) -> f64 {
        let [a, b, c] = self.at(index);
        libm::sqrt(a * a + b * b + c * c)
    }

    pub fn max_magnitude(&self) -> f64 {
        (0..self.geometry.len()).map(|i| self.magnitude(i)).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|&v| v == 0.0))
    }

    pub fn scale(&mut self, factor: f64) {
        for c in &mut self.components {
            c.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &VectorField) -> Result<()> {
        self.geometry.ensure_same(&other.geometry)?;
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        for c in &self.components {
            if let Some(index) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_rejects_bad_inputs() {
        assert!(VolumeGeometry::new([0, 2, 2], [1.0; 3]).is_err());
        assert!(VolumeGeometry::new([2, 2, 2], [1.0, 0.0, 1.0]).is_err());
        assert!(VolumeGeometry::new([2, 2, 2], [1.0, f64::NAN, 1.0]).is_err());
        assert!(VolumeGeometry::new([usize::MAX, 2, 2], [1.0; 3]).is_err());
    }

    #[test]
    fn prostate_mri_spacing_ratio() {
        let g = VolumeGeometry::new([160, 160, 20], [0.3125, 0.3125, 3.0]).unwrap();
        assert_eq!(g.spacing_ratio(), 0.3125 / 3.0);
    }

    #[test]
    fn index_round_trips() {
        let g = VolumeGeometry::isotropic([4, 5, 6]).unwrap();
        for i in 0..g.len() {
            let [x, y, z] = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
        }
        assert_eq!(g.index(1, 0, 0), 1);
        assert_eq!(g.index(0, 1, 0), 4);
        assert_eq!(g.index(0, 0, 1), 20);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let g = VolumeGeometry::isotropic([2, 2, 2]).unwrap();
        assert_eq!(
            ScalarVolume::from_vec(g, vec![0.0; 7]),
            Err(Error::DataLength { expected: 8, found: 7 })
        );
        assert!(MultiChannelVolume::new(g, vec![]).is_err());
    }
}
