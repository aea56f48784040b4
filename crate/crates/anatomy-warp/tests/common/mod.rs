#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use anatomy_warp::deform::CaseFiles;
use anatomy_warp::io::{write_image, write_labels, NiftiType};
use anatomy_warp_core::{LabelVolume, MultiChannelVolume, VolumeGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_anatomy-warp");

fn inside(p: [usize; 3], c: [f64; 3], r: [f64; 3]) -> bool {
    (0..3).map(|a| ((p[a] as f64 - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
}

/// Pelvis-like phantom: rectum (1) behind the prostate (3), bladder (2)
/// above it, one lesion in the prostate's posterior part.
pub fn phantom(shape: [usize; 3], spacing: [f64; 3], seed: u64) -> (MultiChannelVolume, LabelVolume, LabelVolume) {
    let g = VolumeGeometry::new(shape, spacing).unwrap();
    let [nx, ny, nz] = shape.map(|s| s as f64);
    let rectum = ([nx * 0.5, ny * 0.75, nz * 0.5], [nx * 0.12, ny * 0.12, nz * 0.3]);
    let bladder = ([nx * 0.5, ny * 0.22, nz * 0.5], [nx * 0.18, ny * 0.14, nz * 0.3]);
    let prostate = ([nx * 0.5, ny * 0.5, nz * 0.5], [nx * 0.14, ny * 0.11, nz * 0.35]);
    let lesion = ([nx * 0.5, ny * 0.57, nz * 0.5], [nx * 0.04, ny * 0.04, nz * 0.2]);
    let organs = LabelVolume::from_fn(g, |x, y, z| {
        let p = [x, y, z];
        if inside(p, rectum.0, rectum.1) {
            1
        } else if inside(p, bladder.0, bladder.1) {
            2
        } else if inside(p, prostate.0, prostate.1) {
            3
        } else {
            0
        }
    });
    let lesions = LabelVolume::from_fn(g, |x, y, z| u32::from(inside([x, y, z], lesion.0, lesion.1)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t2: Vec<f64> = (0..g.len())
        .map(|i| {
            let base = [0.0, 180.0, 420.0, 260.0][organs.data()[i] as usize];
            (base + rng.gen_range(-20.0f32..20.0) as f64) as f32 as f64
        })
        .collect();
    let adc: Vec<f64> = (0..g.len())
        .map(|i| (1400.0 - 600.0 * lesions.data()[i] as f64 + rng.gen_range(-50.0f32..50.0) as f64) as f32 as f64)
        .collect();
    (MultiChannelVolume::new(g, vec![t2, adc]).unwrap(), lesions, organs)
}

pub fn write_case(dir: &Path, name: &str, shape: [usize; 3], spacing: [f64; 3], seed: u64) -> CaseFiles {
    let (image, lesions, organs) = phantom(shape, spacing, seed);
    let files = CaseFiles {
        image: dir.join(format!("{name}_image.nii.gz")),
        lesions: dir.join(format!("{name}_lesions.nii.gz")),
        organs: dir.join(format!("{name}_organs.nii.gz")),
    };
    write_image(&files.image, &image, NiftiType::Float32, None).unwrap();
    write_labels(&files.lesions, &lesions, NiftiType::Uint8, None).unwrap();
    write_labels(&files.organs, &organs, NiftiType::Uint8, None).unwrap();
    files
}

pub fn run_cli(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("ANATOMY_WARP_THREADS", t.to_string()),
        None => cmd.env_remove("ANATOMY_WARP_THREADS"),
    };
    cmd.output().expect("binary runs")
}

pub fn ok(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn deform_args<'a>(files: &'a CaseFiles, prefix: &'a Path) -> Vec<&'a str> {
    vec![
        "deform",
        "--image",
        s(&files.image),
        "--lesions",
        s(&files.lesions),
        "--organs",
        s(&files.organs),
        "--out-prefix",
        s(prefix),
    ]
}

pub fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path
}
