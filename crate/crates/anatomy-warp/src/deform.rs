//! File-level field, deform, crop and replay operations.

use std::path::{Path, PathBuf};

use anatomy_warp_core::{
    anatomy_field, augment_with_amplitudes, crop_box, crop_region, AmplitudeDraw, TrainingSample, VectorField,
};
use serde::{Deserialize, Serialize};

use crate::batch::augment_seeded;
use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::fsutil::{read_json, sha256_file, write_json};
use crate::io::{intensity_datatype, read_volume, shift_origin, write_field, write_image, write_labels, VolumeFile};

pub const TOOL: &str = "anatomy-warp";

/// Input paths of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseFiles {
    pub image: PathBuf,
    pub lesions: PathBuf,
    pub organs: PathBuf,
}

/// A case read from disk, with the source files' headers.
pub struct LoadedCase {
    pub sample: TrainingSample,
    pub image: VolumeFile,
    pub lesions: VolumeFile,
    pub organs: VolumeFile,
}

pub fn load_case(files: &CaseFiles) -> Result<LoadedCase> {
    let image = read_volume(&files.image)?;
    let lesions = read_volume(&files.lesions)?;
    let organs = read_volume(&files.organs)?;
    let sample = TrainingSample::new(
        image.to_image()?,
        lesions.to_labels(&files.lesions)?,
        organs.to_labels(&files.organs)?,
    )?;
    Ok(LoadedCase {
        sample,
        image,
        lesions,
        organs,
    })
}

/// `PREFIX_<part>.nii.gz`.
pub fn output_path(prefix: &Path, part: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!("_{part}.nii.gz"));
    prefix.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformInputs {
    pub image: FileDigest,
    pub lesions: FileDigest,
    pub organs: FileDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformOutputs {
    pub image: FileDigest,
    pub lesions: FileDigest,
    pub organs: FileDigest,
    pub field: FileDigest,
}

/// Everything needed to recompute a `deform` run without its RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// `LABEL=C` pairs given on the command line; they replace the draw.
    pub amplitude_overrides: Vec<(u32, f64)>,
    pub draw: AmplitudeDraw,
    pub config: ConfigFile,
    pub inputs: DeformInputs,
    pub outputs: DeformOutputs,
}

pub struct DeformRequest<'a> {
    pub files: &'a CaseFiles,
    pub config: &'a ConfigFile,
    pub out_prefix: &'a Path,
    pub seed: u64,
    pub amplitude_overrides: &'a [(u32, f64)],
}

/// Override list as applied amplitudes: the listed organs get their value,
/// configured organs not listed get 0.
fn override_draw(config: &ConfigFile, overrides: &[(u32, f64)]) -> Vec<(u32, f64)> {
    let mut amps: Vec<(u32, f64)> = overrides.to_vec();
    for organ in &config.augmentation.organs {
        if !amps.iter().any(|&(l, _)| l == organ.label) {
            amps.push((organ.label, 0.0));
        }
    }
    amps
}

fn deformed(case: &LoadedCase, config: &ConfigFile, draw: &AmplitudeDraw) -> Result<(TrainingSample, VectorField)> {
    match draw {
        AmplitudeDraw::Skip => Ok((case.sample.clone(), VectorField::zeros(*case.sample.geometry()))),
        AmplitudeDraw::Apply(amps) => Ok(augment_with_amplitudes(&case.sample, amps, &config.augmentation)?),
    }
}

fn write_deformed(
    case: &LoadedCase,
    sample: &TrainingSample,
    field: &VectorField,
    prefix: &Path,
) -> Result<DeformOutputs> {
    let paths = ["image", "lesions", "organs", "field"].map(|p| output_path(prefix, p));
    write_image(
        &paths[0],
        &sample.image,
        intensity_datatype(case.image.datatype),
        Some(&case.image.header),
    )?;
    write_labels(
        &paths[1],
        &sample.lesions,
        case.lesions.datatype,
        Some(&case.lesions.header),
    )?;
    write_labels(
        &paths[2],
        &sample.organs,
        case.organs.datatype,
        Some(&case.organs.header),
    )?;
    write_field(&paths[3], field, Some(&case.organs.header))?;
    let [image, lesions, organs, field] = paths;
    Ok(DeformOutputs {
        image: FileDigest::of(&image)?,
        lesions: FileDigest::of(&lesions)?,
        organs: FileDigest::of(&organs)?,
        field: FileDigest::of(&field)?,
    })
}

pub fn provenance_path(prefix: &Path) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push("_provenance.json");
    prefix.with_file_name(name)
}

/// Augment one case and write image, labels, field and provenance.
///
/// Without overrides the amplitudes are drawn from `stream(seed, 0)` under
/// the configured gate. With overrides the gate is not drawn.
pub fn deform(req: &DeformRequest) -> Result<Provenance> {
    let inputs = DeformInputs {
        image: FileDigest::of(&req.files.image)?,
        lesions: FileDigest::of(&req.files.lesions)?,
        organs: FileDigest::of(&req.files.organs)?,
    };
    let case = load_case(req.files)?;
    let (sample, field, draw) = if req.amplitude_overrides.is_empty() {
        let out = augment_seeded(&case.sample, &req.config.augmentation, req.seed)?;
        let field = out.field.unwrap_or_else(|| VectorField::zeros(*case.sample.geometry()));
        (out.sample, field, out.draw)
    } else {
        let draw = AmplitudeDraw::Apply(override_draw(req.config, req.amplitude_overrides));
        let (s, f) = deformed(&case, req.config, &draw)?;
        (s, f, draw)
    };
    let outputs = write_deformed(&case, &sample, &field, req.out_prefix)?;
    let record = Provenance {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: req.seed,
        amplitude_overrides: req.amplitude_overrides.to_vec(),
        draw,
        config: req.config.clone(),
        inputs,
        outputs,
    };
    write_json(&provenance_path(req.out_prefix), &record)?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub outputs: DeformOutputs,
    /// Whether every output digest equals the recorded one.
    pub identical: bool,
}

/// Recompute a `deform` run from its provenance record and write the
/// outputs under `out_prefix`. Inputs must still hash to the recorded
/// digests.
pub fn replay(provenance: &Path, out_prefix: &Path) -> Result<ReplayReport> {
    let record: Provenance = read_json(provenance)?;
    record.config.validate()?;
    for d in [&record.inputs.image, &record.inputs.lesions, &record.inputs.organs] {
        if sha256_file(&d.path)? != d.sha256 {
            return Err(Error::InputChanged { path: d.path.clone() });
        }
    }
    let files = CaseFiles {
        image: record.inputs.image.path.clone(),
        lesions: record.inputs.lesions.path.clone(),
        organs: record.inputs.organs.path.clone(),
    };
    let case = load_case(&files)?;
    let (sample, field) = deformed(&case, &record.config, &record.draw)?;
    let outputs = write_deformed(&case, &sample, &field, out_prefix)?;
    let recorded = &record.outputs;
    let identical = [
        (&outputs.image, &recorded.image),
        (&outputs.lesions, &recorded.lesions),
        (&outputs.organs, &recorded.organs),
        (&outputs.field, &recorded.field),
    ]
    .iter()
    .all(|(a, b)| a.sha256 == b.sha256);
    Ok(ReplayReport { outputs, identical })
}

/// Anatomy field of `organs` for explicit amplitudes, or each configured
/// organ at `+c_max` when `amplitudes` is empty. Written as three `f64`
/// channels (x, y, z displacement in voxels).
pub fn field(organs_path: &Path, config: &ConfigFile, amplitudes: &[(u32, f64)], out: &Path) -> Result<VectorField> {
    let file = read_volume(organs_path)?;
    let organs = file.to_labels(organs_path)?;
    let amps: Vec<(u32, f64)> = if amplitudes.is_empty() {
        config.augmentation.organs.iter().map(|o| (o.label, o.c_max)).collect()
    } else {
        amplitudes.to_vec()
    };
    let field = anatomy_field(&organs, &amps, &config.augmentation.smoothing)?;
    write_field(out, &field, Some(&file.header))?;
    Ok(field)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CropRecord {
    pub start: [usize; 3],
    pub end: [usize; 3],
    pub outputs: [PathBuf; 3],
}

/// Crop image and both label maps to the organ box; datatypes are kept and
/// the affine origin follows the box corner.
pub fn crop(files: &CaseFiles, config: &ConfigFile, out_prefix: &Path) -> Result<CropRecord> {
    let case = load_case(files)?;
    let crop_cfg = &config.crop;
    let offsets = &config.augmentation.crop_offsets;
    let b = crop_box(
        &case.sample.organs,
        crop_cfg.prostate_label,
        &crop_cfg.adjacent_labels,
        offsets,
    )?;
    let cropped = crop_region(
        &case.sample,
        crop_cfg.prostate_label,
        &crop_cfg.adjacent_labels,
        offsets,
    )?;
    let shifted = |f: &VolumeFile| {
        let mut h = f.header.clone();
        shift_origin(&mut h, b.start);
        h
    };
    let paths = ["image", "lesions", "organs"].map(|p| output_path(out_prefix, p));
    write_image(
        &paths[0],
        &cropped.image,
        case.image.datatype,
        Some(&shifted(&case.image)),
    )?;
    write_labels(
        &paths[1],
        &cropped.lesions,
        case.lesions.datatype,
        Some(&shifted(&case.lesions)),
    )?;
    write_labels(
        &paths[2],
        &cropped.organs,
        case.organs.datatype,
        Some(&shifted(&case.organs)),
    )?;
    Ok(CropRecord {
        start: b.start,
        end: b.end,
        outputs: paths,
    })
}
