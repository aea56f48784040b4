//! NIfTI-1 volumes (`.nii`, `.nii.gz`).
//!
//! On disk a multi-channel image keeps its channels on the 4th dimension; in
//! memory channels are separate x-fastest buffers. Values are read as `f64`
//! with `scl_slope`/`scl_inter` applied and written unscaled (slope 1,
//! intercept 0) in the requested datatype. Integer outputs are rounded
//! half away from zero and range-checked. Header extensions are not kept.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use anatomy_warp_core::{LabelVolume, MultiChannelVolume, ScalarVolume, VectorField, VolumeGeometry};
use flate2::read::GzDecoder;
use ndarray::{Array, IxDyn, ShapeBuilder};
use nifti::writer::WriterOptions;
use nifti::{InMemNiftiObject, NiftiError, NiftiObject};

pub use nifti::{NiftiHeader, NiftiType};

use crate::error::{Error, Result};
use crate::fsutil::{persist, sibling_temp};

/// Datatypes accepted on input and output.
pub const SUPPORTED_DATATYPES: [NiftiType; 8] = [
    NiftiType::Uint8,
    NiftiType::Int8,
    NiftiType::Uint16,
    NiftiType::Int16,
    NiftiType::Uint32,
    NiftiType::Int32,
    NiftiType::Float32,
    NiftiType::Float64,
];

const XYZT_MM: u8 = 2;
const SFORM_ALIGNED: i16 = 2;

/// A decoded NIfTI file.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeFile {
    /// Header as read; reused as the reference when writing derived volumes.
    pub header: NiftiHeader,
    pub datatype: NiftiType,
    pub geometry: VolumeGeometry,
    /// One x-fastest buffer per channel, scaling already applied.
    pub channels: Vec<Vec<f64>>,
}

/// The natural in-memory form of a file.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeData {
    Scalar(ScalarVolume),
    Labels(LabelVolume),
    MultiChannel(MultiChannelVolume),
}

fn is_integer(t: NiftiType) -> bool {
    !matches!(t, NiftiType::Float32 | NiftiType::Float64)
}

fn label_value(v: f64) -> Option<u32> {
    (v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v)).then_some(v as u32)
}

impl VolumeFile {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Several channels give a multi-channel image; one channel of an
    /// integer datatype holding non-negative integers gives labels; anything
    /// else a scalar volume.
    pub fn into_data(self) -> Result<VolumeData> {
        if self.channels.len() > 1 {
            return Ok(VolumeData::MultiChannel(MultiChannelVolume::new(
                self.geometry,
                self.channels,
            )?));
        }
        let values = self.channels.into_iter().next().expect("at least one channel");
        if is_integer(self.datatype) {
            if let Some(labels) = values.iter().map(|&v| label_value(v)).collect::<Option<Vec<u32>>>() {
                return Ok(VolumeData::Labels(LabelVolume::from_vec(self.geometry, labels)?));
            }
        }
        Ok(VolumeData::Scalar(ScalarVolume::from_vec(self.geometry, values)?))
    }

    pub fn to_image(&self) -> Result<MultiChannelVolume> {
        Ok(MultiChannelVolume::new(self.geometry, self.channels.clone())?)
    }

    /// Single-channel, non-negative integer values; the datatype may be float.
    pub fn to_labels(&self, path: &Path) -> Result<LabelVolume> {
        let not_labels = |reason: String| Error::NotLabels {
            path: path.to_path_buf(),
            reason,
        };
        if self.channels.len() != 1 {
            return Err(not_labels(format!(
                "label maps need 1 channel, found {}",
                self.channels.len()
            )));
        }
        let data = self.channels[0]
            .iter()
            .enumerate()
            .map(|(i, &v)| label_value(v).ok_or_else(|| not_labels(format!("voxel {i} holds {v}, not a label id"))))
            .collect::<Result<Vec<u32>>>()?;
        Ok(LabelVolume::from_vec(self.geometry, data)?)
    }
}

fn corrupt_header(path: &Path, reason: impl ToString) -> Error {
    Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn decode_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::CorruptData {
                path: path.to_path_buf(),
                reason: format!("gzip stream: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Shape `[nx, ny, nz]` and channel count from `dim`.
fn layout(path: &Path, header: &NiftiHeader) -> Result<([usize; 3], usize)> {
    let rank = header.dim[0] as usize;
    if !(1..=7).contains(&rank) {
        return Err(corrupt_header(path, format!("dim[0] = {rank}")));
    }
    let dims = &header.dim[1..=rank];
    let unsupported = || Error::UnsupportedShape {
        path: path.to_path_buf(),
        dim: dims.to_vec(),
    };
    if dims.contains(&0) || dims.iter().skip(4).any(|&d| d != 1) {
        return Err(unsupported());
    }
    let at = |a: usize| dims.get(a).map_or(1, |&d| d as usize);
    Ok(([at(0), at(1), at(2)], at(3)))
}

macro_rules! decode_as {
    ($volume:expr, $t:ty) => {
        $volume
            .into_nifti_typed_data::<$t>()
            .map(|v| v.into_iter().map(f64::from).collect::<Vec<f64>>())
    };
}

/// Read a NIfTI-1 file; gzip is detected from the content, not the name.
pub fn read_volume(path: impl AsRef<Path>) -> Result<VolumeFile> {
    let path = path.as_ref();
    let bytes = decode_bytes(path)?;
    let header = NiftiHeader::from_reader(Cursor::new(&bytes)).map_err(|e| match e {
        NiftiError::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            corrupt_header(path, "file is shorter than a NIfTI-1 header")
        }
        other => corrupt_header(path, other),
    })?;
    let unsupported = || Error::UnsupportedDatatype {
        path: path.to_path_buf(),
        code: header.datatype,
    };
    let datatype = header.data_type().map_err(|_| unsupported())?;
    if !SUPPORTED_DATATYPES.contains(&datatype) {
        return Err(unsupported());
    }
    let (shape, num_channels) = layout(path, &header)?;
    let spacing = [1, 2, 3].map(|a| header.pixdim[a] as f64);
    if !spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::NonPositiveSpacing {
            path: path.to_path_buf(),
            spacing,
        });
    }
    let geometry = VolumeGeometry::new(shape, spacing)?;

    let object = InMemNiftiObject::from_reader(Cursor::new(&bytes)).map_err(|e| Error::CorruptData {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let volume = object.into_volume();
    let mut values = match datatype {
        NiftiType::Uint8 => decode_as!(volume, u8),
        NiftiType::Int8 => decode_as!(volume, i8),
        NiftiType::Uint16 => decode_as!(volume, u16),
        NiftiType::Int16 => decode_as!(volume, i16),
        NiftiType::Uint32 => decode_as!(volume, u32),
        NiftiType::Int32 => decode_as!(volume, i32),
        NiftiType::Float32 => decode_as!(volume, f32),
        _ => volume.into_nifti_typed_data::<f64>(),
    }
    .map_err(|e| Error::CorruptData {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let n = geometry.len();
    if values.len() != n * num_channels {
        return Err(Error::CorruptData {
            path: path.to_path_buf(),
            reason: format!("expected {} values, found {}", n * num_channels, values.len()),
        });
    }
    let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);
    if slope != 0.0 && (slope, inter) != (1.0, 0.0) {
        values.iter_mut().for_each(|v| *v = *v * slope + inter);
    }
    let channels = values.chunks_exact(n).map(<[f64]>::to_vec).collect();
    Ok(VolumeFile {
        header,
        datatype,
        geometry,
        channels,
    })
}

fn output_header(reference: Option<&NiftiHeader>, geometry: &VolumeGeometry) -> NiftiHeader {
    let spacing = geometry.spacing();
    let mut h = match reference {
        Some(r) => r.clone(),
        None => {
            let mut h = NiftiHeader {
                qform_code: 0,
                sform_code: SFORM_ALIGNED,
                xyzt_units: XYZT_MM,
                ..NiftiHeader::default()
            };
            h.srow_x = [spacing[0] as f32, 0.0, 0.0, 0.0];
            h.srow_y = [0.0, spacing[1] as f32, 0.0, 0.0];
            h.srow_z = [0.0, 0.0, spacing[2] as f32, 0.0];
            h
        }
    };
    for a in 0..3 {
        h.pixdim[a + 1] = spacing[a] as f32;
    }
    h.cal_min = 0.0;
    h.cal_max = 0.0;
    h
}

macro_rules! to_integer {
    ($values:expr, $t:ty, $name:literal) => {
        $values
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                let r = value.round();
                if r.is_finite() && (<$t>::MIN as f64..=<$t>::MAX as f64).contains(&r) {
                    Ok(r as $t)
                } else {
                    Err(Error::OutOfRange {
                        index,
                        value,
                        datatype: $name,
                    })
                }
            })
            .collect::<Result<Vec<$t>>>()
    };
}

fn write_typed<T>(path: &Path, header: &NiftiHeader, dims: &[usize], data: Vec<T>) -> Result<()>
where
    T: nifti::DataElement + bytemuck::Pod,
{
    let array = Array::from_shape_vec(IxDyn(dims).f(), data).expect("length checked by caller");
    let suffix = if is_gz(path) { ".nii.gz" } else { ".nii" };
    let tmp = sibling_temp(path, suffix)?;
    WriterOptions::new(tmp.path())
        .reference_header(header)
        .write_nifti(&array)
        .map_err(|e| match e {
            NiftiError::Io(io) => Error::io(path, io),
            other => Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(other.to_string()),
            },
        })?;
    persist(tmp, path)
}

fn is_gz(path: &Path) -> bool {
    path.to_string_lossy().ends_with(".gz")
}

fn check_extension(path: &Path) -> Result<()> {
    let name = path.to_string_lossy();
    if name.ends_with(".nii") || name.ends_with(".nii.gz") {
        Ok(())
    } else {
        Err(Error::Usage(format!("{name}: output must end in .nii or .nii.gz")))
    }
}

/// Write channels (each x-fastest on `geometry`) as one file, the channels
/// on the 4th dimension when there is more than one.
///
/// `reference` supplies every header field except dimensions, datatype,
/// scaling, spacing and the display range. Without it the affine is the
/// spacing diagonal. The write goes through a temporary file and a rename.
pub fn write_channels(
    path: impl AsRef<Path>,
    geometry: &VolumeGeometry,
    channels: &[&[f64]],
    datatype: NiftiType,
    reference: Option<&NiftiHeader>,
) -> Result<()> {
    let path = path.as_ref();
    check_extension(path)?;
    if channels.is_empty() {
        return Err(Error::Usage("nothing to write: no channels".into()));
    }
    if !SUPPORTED_DATATYPES.contains(&datatype) {
        return Err(Error::UnsupportedDatatype {
            path: path.to_path_buf(),
            code: datatype as i16,
        });
    }
    let n = geometry.len();
    for c in channels {
        if c.len() != n {
            return Err(anatomy_warp_core::Error::DataLength {
                expected: n,
                found: c.len(),
            }
            .into());
        }
    }
    let mut dims = geometry.shape().to_vec();
    if channels.len() > 1 {
        dims.push(channels.len());
    }
    let header = output_header(reference, geometry);
    let values: Vec<f64> = channels.concat();
    match datatype {
        NiftiType::Uint8 => write_typed(path, &header, &dims, to_integer!(values, u8, "uint8")?),
        NiftiType::Int8 => write_typed(path, &header, &dims, to_integer!(values, i8, "int8")?),
        NiftiType::Uint16 => write_typed(path, &header, &dims, to_integer!(values, u16, "uint16")?),
        NiftiType::Int16 => write_typed(path, &header, &dims, to_integer!(values, i16, "int16")?),
        NiftiType::Uint32 => write_typed(path, &header, &dims, to_integer!(values, u32, "uint32")?),
        NiftiType::Int32 => write_typed(path, &header, &dims, to_integer!(values, i32, "int32")?),
        NiftiType::Float32 => write_typed(path, &header, &dims, values.iter().map(|&v| v as f32).collect()),
        _ => write_typed(path, &header, &dims, values),
    }
}

pub fn write_image(
    path: impl AsRef<Path>,
    image: &MultiChannelVolume,
    datatype: NiftiType,
    reference: Option<&NiftiHeader>,
) -> Result<()> {
    let channels: Vec<&[f64]> = image.channels().iter().map(Vec::as_slice).collect();
    write_channels(path, image.geometry(), &channels, datatype, reference)
}

pub fn write_labels(
    path: impl AsRef<Path>,
    labels: &LabelVolume,
    datatype: NiftiType,
    reference: Option<&NiftiHeader>,
) -> Result<()> {
    let values: Vec<f64> = labels.data().iter().map(|&l| l as f64).collect();
    write_channels(path, labels.geometry(), &[&values], datatype, reference)
}

/// Displacement components x, y, z as three `f64` channels.
pub fn write_field(path: impl AsRef<Path>, field: &VectorField, reference: Option<&NiftiHeader>) -> Result<()> {
    let [x, y, z] = field.components();
    write_channels(path, field.geometry(), &[x, y, z], NiftiType::Float64, reference)
}

/// Output datatype for interpolated intensities: `f64` input stays `f64`,
/// everything else becomes `f32`.
pub fn intensity_datatype(source: NiftiType) -> NiftiType {
    if source == NiftiType::Float64 {
        NiftiType::Float64
    } else {
        NiftiType::Float32
    }
}

/// Move the voxel origin to `start` so a cropped grid keeps its world
/// position. Updates both the sform rows and the qform offset.
pub fn shift_origin(header: &mut NiftiHeader, start: [usize; 3]) {
    let ijk = start.map(|v| v as f64);
    for row in [&mut header.srow_x, &mut header.srow_y, &mut header.srow_z] {
        let delta: f64 = (0..3).map(|a| row[a] as f64 * ijk[a]).sum();
        row[3] = (row[3] as f64 + delta) as f32;
    }
    let (b, c, d) = (
        header.quatern_b as f64,
        header.quatern_c as f64,
        header.quatern_d as f64,
    );
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    let rot = [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        ],
    ];
    let qfac = if header.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
    let step = [
        header.pixdim[1] as f64 * ijk[0],
        header.pixdim[2] as f64 * ijk[1],
        qfac * header.pixdim[3] as f64 * ijk[2],
    ];
    let offsets = [&mut header.quatern_x, &mut header.quatern_y, &mut header.quatern_z];
    for (r, o) in rot.iter().zip(offsets) {
        let delta: f64 = (0..3).map(|k| r[k] * step[k]).sum();
        *o = (*o as f64 + delta) as f32;
    }
}
