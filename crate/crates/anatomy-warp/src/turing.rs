//! Blinded image batches for a realism reading.
//!
//! Each case is emitted once under one randomly chosen condition: the
//! original image, an anatomy-informed deformation of one randomly chosen
//! organ, or a random-elastic deformation. Files get anonymous shuffled
//! names; the answer key is written separately and its SHA-256 goes into
//! the blinded manifest so the key cannot be edited unnoticed.
//!
//! Case list:
//!
//! ```json
//! { "cases": [ { "id": "p001", "image": "p001_t2.nii.gz", "organs": "p001_organs.nii.gz" } ] }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anatomy_warp_core::rng::stream;
use anatomy_warp_core::{
    anatomy_field, random_elastic_field, sample_amplitudes, warp_image, AmplitudeDraw, AugmentationConfig,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::config::ConfigFile;
use crate::error::{Error, Result};
use crate::fsutil::{read_json, resolve, sha256_hex, write_atomic, write_json};
use crate::io::{intensity_datatype, read_volume, write_image, NiftiHeader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuringCase {
    pub id: String,
    pub image: PathBuf,
    pub organs: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseList {
    pub cases: Vec<TuringCase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Original,
    Anatomy,
    Elastic,
}

const CONDITIONS: [Condition; 3] = [Condition::Original, Condition::Anatomy, Condition::Elastic];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerEntry {
    pub sample: String,
    pub case: String,
    pub condition: Condition,
    /// Deformed organ and its amplitude for the anatomy condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub organ: Option<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerKey {
    pub seed: u64,
    pub entries: Vec<AnswerEntry>,
}

/// What readers receive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlindedManifest {
    pub samples: Vec<String>,
    pub answer_key_sha256: String,
}

pub const ANSWER_KEY: &str = "answer_key.json";
pub const MANIFEST: &str = "manifest.json";

fn sample_name(k: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(3);
    format!("sample_{k:0width$}")
}

/// Header with free-text fields cleared so nothing identifies the case.
fn blinded_header(h: &NiftiHeader) -> NiftiHeader {
    let mut h = h.clone();
    h.descrip = vec![0; 80];
    h.aux_file = [0; 24];
    h.db_name = [0; 18];
    h.intent_name = [0; 16];
    h
}

fn render(
    list_path: &Path,
    case: &TuringCase,
    index: usize,
    name: String,
    config: &ConfigFile,
    seed: u64,
    out_dir: &Path,
) -> Result<AnswerEntry> {
    let image_path = resolve(list_path, &case.image);
    let organs_path = resolve(list_path, &case.organs);
    let image_file = read_volume(&image_path)?;
    let image = image_file.to_image()?;
    let organs = read_volume(&organs_path)?.to_labels(&organs_path)?;
    if image.geometry() != organs.geometry() {
        return Err(anatomy_warp_core::Error::GeometryMismatch {
            expected: *image.geometry(),
            found: *organs.geometry(),
        }
        .into());
    }
    let aug = &config.augmentation;
    let mut rng = stream(seed, index as u64);
    let condition = CONDITIONS[rng.gen_range(0..CONDITIONS.len())];
    let (field, organ) = match condition {
        Condition::Original => (None, None),
        Condition::Anatomy => {
            let present: Vec<_> = aug.organs.iter().filter(|o| organs.count(o.label) > 0).collect();
            let chosen = present.choose(&mut rng).ok_or_else(|| {
                Error::Config(format!(
                    "case `{}`: none of the configured organs is segmented",
                    case.id
                ))
            })?;
            let single = AugmentationConfig {
                organs: vec![(*chosen).clone()],
                probability: 1.0,
                ..aug.clone()
            };
            let AmplitudeDraw::Apply(amps) = sample_amplitudes(&single, &mut rng) else {
                unreachable!("probability 1 always applies")
            };
            let field = anatomy_field(&organs, &amps, &aug.smoothing)?;
            (Some(field), Some(amps[0]))
        }
        Condition::Elastic => {
            let e = config.elastic();
            (
                Some(random_elastic_field(*image.geometry(), e.alpha, e.sigma, &mut rng)?),
                None,
            )
        }
    };
    let out = match field {
        Some(f) => warp_image(&image, &f, aug.interpolation, aug.boundary)?,
        None => image,
    };
    let file = out_dir.join(format!("{name}.nii.gz"));
    write_image(
        &file,
        &out,
        intensity_datatype(image_file.datatype),
        Some(&blinded_header(&image_file.header)),
    )?;
    Ok(AnswerEntry {
        sample: name,
        case: case.id.clone(),
        condition,
        organ,
    })
}

/// Render the batch into `out_dir`. Case `i` uses `stream(seed, i)`; the
/// name shuffle uses the stream after the last case.
pub fn turing_batch(
    list_path: &Path,
    config: &ConfigFile,
    out_dir: &Path,
    seed: u64,
    pool: &ThreadPool,
) -> Result<BlindedManifest> {
    let list: CaseList = read_json(list_path)?;
    let n = list.cases.len();
    if n == 0 {
        return Err(Error::Manifest {
            path: list_path.to_path_buf(),
            reason: "no cases".into(),
        });
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut stream(seed, n as u64));
    let mut entries: Vec<AnswerEntry> = pool.install(|| {
        list.cases
            .par_iter()
            .enumerate()
            .map(|(i, case)| render(list_path, case, i, sample_name(slots[i], n), config, seed, out_dir))
            .collect::<Result<_>>()
    })?;
    entries.sort_by(|a, b| a.sample.cmp(&b.sample));
    let key = AnswerKey { seed, entries };
    let mut key_bytes = serde_json::to_vec_pretty(&key).expect("in-memory JSON serialization");
    key_bytes.push(b'\n');
    write_atomic(&out_dir.join(ANSWER_KEY), &key_bytes)?;
    let manifest = BlindedManifest {
        samples: key.entries.iter().map(|e| format!("{}.nii.gz", e.sample)).collect(),
        answer_key_sha256: sha256_hex(&key_bytes),
    };
    write_json(&out_dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}
