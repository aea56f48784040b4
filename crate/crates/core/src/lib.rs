//! Anatomy-informed spatial augmentation for volumetric images.
//!
//! The core builds a displacement field from organ segmentations as the
//! voxel-wise gradient of a Gaussian-smoothed organ indicator, scaled by a
//! signed amplitude per organ, and applies it to images and label maps by
//! backward warping. Positive amplitudes simulate distension of the organ,
//! negative ones its evacuation.
//!
//! Alongside the transform the crate carries the random augmentation policy
//! (amplitude sampling, a random-elastic baseline, organ-offset cropping) and
//! the lesion-detection evaluation used to judge trained models: object
//! extraction, IoU matching, FROC, partial AUROC above a sensitivity floor,
//! F1 at a fixed sensitivity and paired bootstrap comparison.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration
//! files, the command line and worker pools live in the `anatomy-warp` crate.
//!
//! # Memory layout
//!
//! All grids are stored x-fastest: the linear index of voxel `(x, y, z)` is
//! `x + nx * (y + ny * z)`, the same order NIfTI uses on disk.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

mod error;
pub mod field;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod stats;
pub mod volume;
pub mod warp;

pub use error::{Error, Result};
pub use field::{
    anatomy_field, gaussian_kernel, gaussian_smooth, rasterize_indicator, spatial_gradient, AnisotropyMode,
    SmoothingSpec,
};
pub use policy::{
    apply_field, augment, augment_with_amplitudes, crop_box, crop_region, foldover_diagnostic, jacobian_determinants,
    random_elastic_field, sample_amplitudes, AmplitudeDraw, AmplitudeSampling, AugmentationConfig, Augmented, CropBox,
    CropOffsets, ElasticBaseline, FoldoverReport, OrganAmplitudeSpec, TrainingSample,
};
pub use volume::{LabelVolume, MultiChannelVolume, ScalarVolume, VectorField, Volume, VolumeGeometry};
pub use warp::{sample_at, warp_image, warp_labels, BoundaryMode, InterpolationMode};
