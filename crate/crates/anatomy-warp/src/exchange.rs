//! Flat-buffer entry points for host pipelines and language bindings.
//!
//! Images cross as `f32`, label maps as `u16`. Buffers are x-fastest and an
//! image's channels are stacked channel-major, so a C-contiguous array of
//! shape `(c, z, y, x)` can be passed as is. The core computes in `f64`:
//! each call makes one widening copy on entry and one narrowing copy on
//! exit. The configuration is the same strict JSON document the CLI reads.

use anatomy_warp_core::{AmplitudeDraw, LabelVolume, MultiChannelVolume, TrainingSample, VolumeGeometry};

use crate::batch::augment_seeded;
use crate::config::ConfigFile;
use crate::error::{Error, Result};

/// Grid metadata for a set of buffers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayMeta {
    /// `[nx, ny, nz]`.
    pub shape: [usize; 3],
    pub channels: usize,
    /// Millimetres per voxel along x, y, z.
    pub spacing: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeOutput {
    pub image: Vec<f32>,
    pub lesions: Vec<u16>,
    pub organs: Vec<u16>,
    pub draw: AmplitudeDraw,
}

fn check_len(name: &str, found: usize, expected: usize) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "{name} buffer holds {found} values, shape needs {expected}"
        )))
    }
}

fn labels_from(g: VolumeGeometry, data: &[u16]) -> Result<LabelVolume> {
    Ok(LabelVolume::from_vec(g, data.iter().map(|&l| u32::from(l)).collect())?)
}

fn labels_to(labels: &LabelVolume) -> Vec<u16> {
    // warping only copies existing ids, which came in as u16
    labels.data().iter().map(|&l| l as u16).collect()
}

/// Run one augmentation with `seed`; bit-identical to the CLI's `deform`
/// and to [`augment_seeded`] on the same data.
pub fn augment_buffers(
    image: &[f32],
    lesions: &[u16],
    organs: &[u16],
    meta: &ArrayMeta,
    config_json: &str,
    seed: u64,
) -> Result<ExchangeOutput> {
    let config = ConfigFile::from_json(config_json)?;
    let g = VolumeGeometry::new(meta.shape, meta.spacing)?;
    let n = g.len();
    if meta.channels == 0 {
        return Err(Error::Usage("image needs at least one channel".into()));
    }
    check_len("image", image.len(), n * meta.channels)?;
    check_len("lesion", lesions.len(), n)?;
    check_len("organ", organs.len(), n)?;
    let channels = image
        .chunks_exact(n)
        .map(|c| c.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let sample = TrainingSample::new(
        MultiChannelVolume::new(g, channels)?,
        labels_from(g, lesions)?,
        labels_from(g, organs)?,
    )?;
    let out = augment_seeded(&sample, &config.augmentation, seed)?;
    let s = out.sample;
    Ok(ExchangeOutput {
        image: s.image.channels().iter().flatten().map(|&v| v as f32).collect(),
        lesions: labels_to(&s.lesions),
        organs: labels_to(&s.organs),
        draw: out.draw,
    })
}
