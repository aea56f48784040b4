use alloc::string::String;

use crate::volume::VolumeGeometry;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("data length {found} does not match geometry with {expected} voxels")]
    DataLength { expected: usize, found: usize },

    #[error("geometry mismatch: expected shape {:?} spacing {:?}, found shape {:?} spacing {:?}",
        expected.shape(), expected.spacing(), found.shape(), found.spacing())]
    GeometryMismatch {
        expected: VolumeGeometry,
        found: VolumeGeometry,
    },

    #[error("axis {axis} has length {len}; at least 2 voxels are required")]
    AxisTooShort { axis: char, len: usize },

    #[error("non-finite value at voxel {index}")]
    NonFinite { index: usize },

    #[error("non-finite sampling coordinate {0:?}")]
    NonFiniteCoordinate([f64; 3]),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("organ label {0} listed more than once")]
    DuplicateOrgan(u32),

    #[error("label {0} not present in the organ segmentation")]
    MissingLabel(u32),

    #[error("probability value {value} at voxel {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("case sets differ: {0}")]
    CaseMismatch(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
