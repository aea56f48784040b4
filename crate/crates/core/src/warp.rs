//! Backward warping: output voxel `p` samples the input at `p + V(p)`.
//!
//! Sign convention along one axis, with `V_x = +1` at every voxel:
//!
//! ```text
//! input   a b c d e
//! output  b c d e e     (clamp-to-edge)
//! ```
//!
//! Content moves towards −x when the field points to +x.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, MultiChannelVolume, ScalarVolume, VectorField, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum InterpolationMode {
    #[default]
    Trilinear,
    /// Nearest voxel, rounding half away from zero.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum BoundaryMode {
    #[default]
    ClampToEdge,
    /// Samples outside the grid read this value.
    Constant(f64),
}

impl BoundaryMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryMode::Constant(v) if !v.is_finite() => {
                Err(Error::param("boundary", "constant fill value must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// Interpolated value of `vol` at voxel coordinates `coords`.
pub fn sample_at(
    vol: &ScalarVolume,
    coords: [f64; 3],
    interp: InterpolationMode,
    boundary: BoundaryMode,
) -> Result<f64> {
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCoordinate(coords));
    }
    boundary.validate()?;
    let sampler = Sampler::new(vol.geometry().shape());
    Ok(match interp {
        InterpolationMode::Trilinear => sampler.trilinear(vol.data(), coords, boundary),
        InterpolationMode::Nearest => sampler
            .nearest(coords, boundary)
            .map_or_else(|| fill_value(boundary), |i| vol.data()[i]),
    })
}

fn fill_value(boundary: BoundaryMode) -> f64 {
    match boundary {
        BoundaryMode::Constant(v) => v,
        BoundaryMode::ClampToEdge => unreachable!("clamp never leaves the grid"),
    }
}

/// Apply `field` to every channel of `img`.
pub fn warp_image(
    img: &MultiChannelVolume,
    field: &VectorField,
    interp: InterpolationMode,
    boundary: BoundaryMode,
) -> Result<MultiChannelVolume> {
    img.geometry().ensure_same(field.geometry())?;
    field.ensure_finite()?;
    boundary.validate()?;
    let geometry = *img.geometry();
    let sampler = Sampler::new(geometry.shape());
    let n = geometry.len();
    let mut out: Vec<Vec<f64>> = (0..img.num_channels()).map(|_| Vec::with_capacity(n)).collect();
    for_each_target(field, |p| match interp {
        InterpolationMode::Trilinear => {
            let stencil = sampler.stencil(p, boundary);
            for (c, o) in out.iter_mut().enumerate() {
                o.push(stencil.apply(img.channel(c)));
            }
        }
        InterpolationMode::Nearest => {
            let idx = sampler.nearest(p, boundary);
            for (c, o) in out.iter_mut().enumerate() {
                o.push(idx.map_or_else(|| fill_value(boundary), |i| img.channel(c)[i]));
            }
        }
    });
    MultiChannelVolume::new(geometry, out)
}

/// Nearest-neighbour warp of a label map; never produces a label that is not
/// already present in the input.
pub fn warp_labels(labels: &LabelVolume, field: &VectorField) -> Result<LabelVolume> {
    labels.geometry().ensure_same(field.geometry())?;
    field.ensure_finite()?;
    let sampler = Sampler::new(labels.geometry().shape());
    let mut out = Vec::with_capacity(labels.geometry().len());
    let src = labels.data();
    for_each_target(field, |p| {
        let i = sampler
            .nearest(p, BoundaryMode::ClampToEdge)
            .expect("clamp never leaves the grid");
        out.push(src[i]);
    });
    Volume::from_vec(*labels.geometry(), out)
}

/// Calls `f` with `p + V(p)` for every voxel in linear order.
fn for_each_target(field: &VectorField, mut f: impl FnMut([f64; 3])) {
    let [nx, ny, nz] = field.geometry().shape();
    let [vx, vy, vz] = field.components();
    let mut i = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                f([x as f64 + vx[i], y as f64 + vy[i], z as f64 + vz[i]]);
                i += 1;
            }
        }
    }
}

struct Sampler {
    shape: [usize; 3],
    strides: [usize; 3],
}

/// One axis of a linear stencil: two indices (`None` = outside the grid) and
/// the fractional weight of the upper one. `frac == 0` means the upper
/// corner is not read at all, so grid-node samples are exact.
#[derive(Clone, Copy)]
struct AxisTap {
    lo: Option<usize>,
    hi: Option<usize>,
    frac: f64,
}

struct Stencil {
    taps: [AxisTap; 3],
    fill: f64,
}

impl Stencil {
    #[inline]
    fn apply(&self, data: &[f64]) -> f64 {
        let [tx, ty, tz] = self.taps;
        let read = |i: Option<usize>, j: Option<usize>, k: Option<usize>| match (i, j, k) {
            (Some(i), Some(j), Some(k)) => data[i + j + k],
            _ => self.fill,
        };
        let along_x = |j, k| lerp(read(tx.lo, j, k), tx.frac, || read(tx.hi, j, k));
        let along_y = |k| lerp(along_x(ty.lo, k), ty.frac, || along_x(ty.hi, k));
        lerp(along_y(tz.lo), tz.frac, || along_y(tz.hi))
    }
}

/// `a + t (b - a)`, clamped to `[min(a, b), max(a, b)]`; `b` is only
/// evaluated when `t > 0`.
#[inline]
fn lerp(a: f64, t: f64, b: impl FnOnce() -> f64) -> f64 {
    if t == 0.0 {
        return a;
    }
    let b = b();
    let v = a + t * (b - a);
    v.clamp(a.min(b), a.max(b))
}

impl Sampler {
    fn new(shape: [usize; 3]) -> Self {
        Self {
            shape,
            strides: [1, shape[0], shape[0] * shape[1]],
        }
    }

    #[inline]
    fn axis_tap(&self, axis: usize, c: f64, boundary: BoundaryMode) -> AxisTap {
        let n = self.shape[axis];
        let s = self.strides[axis];
        let max = (n - 1) as f64;
        match boundary {
            BoundaryMode::ClampToEdge => {
                let c = c.clamp(0.0, max);
                let f = libm::floor(c);
                let lo = f as usize;
                AxisTap {
                    lo: Some(lo * s),
                    hi: Some((lo + 1).min(n - 1) * s),
                    frac: c - f,
                }
            }
            BoundaryMode::Constant(_) => {
                let f = libm::floor(c);
                let inside = |v: f64| (v >= 0.0 && v <= max).then(|| v as usize * s);
                AxisTap {
                    lo: inside(f),
                    hi: inside(f + 1.0),
                    frac: c - f,
                }
            }
        }
    }

    #[inline]
    fn stencil(&self, p: [f64; 3], boundary: BoundaryMode) -> Stencil {
        Stencil {
            taps: [0, 1, 2].map(|a| self.axis_tap(a, p[a], boundary)),
            fill: match boundary {
                BoundaryMode::Constant(v) => v,
                BoundaryMode::ClampToEdge => 0.0,
            },
        }
    }

    #[inline]
    fn trilinear(&self, data: &[f64], p: [f64; 3], boundary: BoundaryMode) -> f64 {
        self.stencil(p, boundary).apply(data)
    }

    /// Linear index of the nearest voxel, or `None` when it lies outside the
    /// grid under constant boundary handling.
    #[inline]
    fn nearest(&self, p: [f64; 3], boundary: BoundaryMode) -> Option<usize> {
        let mut idx = 0;
        for a in 0..3 {
            let r = libm::round(p[a]);
            let max = (self.shape[a] - 1) as f64;
            let r = match boundary {
                BoundaryMode::ClampToEdge => r.clamp(0.0, max),
                BoundaryMode::Constant(_) if r < 0.0 || r > max => return None,
                BoundaryMode::Constant(_) => r,
            };
            idx += r as usize * self.strides[a];
        }
        Some(idx)
    }
}
