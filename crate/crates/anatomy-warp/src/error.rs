use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] anatomy_warp_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: corrupt NIfTI header: {reason}", path.display())]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("{}: truncated or unreadable voxel data: {reason}", path.display())]
    CorruptData { path: PathBuf, reason: String },

    #[error("{}: voxel spacing {spacing:?} must be finite and > 0", path.display())]
    NonPositiveSpacing { path: PathBuf, spacing: [f64; 3] },

    #[error("{}: unsupported NIfTI datatype code {code}", path.display())]
    UnsupportedDatatype { path: PathBuf, code: i16 },

    #[error("{}: unsupported dimensions {dim:?}", path.display())]
    UnsupportedShape { path: PathBuf, dim: Vec<u16> },

    #[error("{}: {reason}", path.display())]
    NotLabels { path: PathBuf, reason: String },

    #[error("value {value} at voxel {index} does not fit the output datatype {datatype}")]
    OutOfRange {
        index: usize,
        value: f64,
        datatype: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid manifest {}: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },

    #[error("input {} changed since the provenance record was written", path.display())]
    InputChanged { path: PathBuf },

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable tag for the CLI's error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(_) => "core",
            Error::Io { .. } => "io",
            Error::CorruptHeader { .. } => "corrupt-header",
            Error::CorruptData { .. } => "corrupt-data",
            Error::NonPositiveSpacing { .. } => "non-positive-spacing",
            Error::UnsupportedDatatype { .. } => "unsupported-datatype",
            Error::UnsupportedShape { .. } => "unsupported-shape",
            Error::NotLabels { .. } => "not-labels",
            Error::OutOfRange { .. } => "out-of-range",
            Error::Config(_) => "config",
            Error::Manifest { .. } => "manifest",
            Error::InputChanged { .. } => "input-changed",
            Error::Usage(_) => "usage",
        }
    }
}
