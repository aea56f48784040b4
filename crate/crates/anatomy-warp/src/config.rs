//! The JSON configuration file.
//!
//! Every section and field is optional and defaults to the published
//! settings, so `{}` is a complete configuration. Unknown keys are errors.
//!
//! ```json
//! {
//!   "augmentation": { "probability": 0.2, "organs": [{ "label": 1, "c_max": 1200.0 }] },
//!   "crop": { "prostate_label": 3, "adjacent_labels": [1, 2] },
//!   "metrics": { "iou_threshold": 0.1, "bootstrap": { "replications": 1000, "seed": 0 } },
//!   "turing": { "elastic": { "alpha": 900.0, "sigma": 11.0 } }
//! }
//! ```

use std::path::Path;

use anatomy_warp_core::metrics::{
    BootstrapConfig, Connectivity, FP_PER_SCAN, IOU_THRESHOLD, PROB_THRESHOLD, SENSITIVITY_FLOOR, TARGET_SENSITIVITY,
};
use anatomy_warp_core::policy::{BLADDER, PROSTATE, RECTUM};
use anatomy_warp_core::{AugmentationConfig, ElasticBaseline};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropConfig {
    pub prostate_label: u32,
    /// Organs whose in-plane extent joins the prostate's.
    pub adjacent_labels: Vec<u32>,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            prostate_label: PROSTATE,
            adjacent_labels: vec![RECTUM, BLADDER],
        }
    }
}

/// How ground-truth lesions are separated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundTruthObjects {
    /// Connected components of the non-zero voxels.
    #[default]
    Components,
    /// One lesion per distinct non-zero label id.
    Labels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Probability maps are binarised at `p ≥ prob_threshold`.
    pub prob_threshold: f64,
    pub iou_threshold: f64,
    /// pAUROC covers sensitivities above this floor.
    pub sensitivity_floor: f64,
    /// FROC working point in false positives per scan.
    pub fp_per_scan: f64,
    /// Sensitivity at which F1 is reported.
    pub target_sensitivity: f64,
    /// Upper limit of the normalised FROC area.
    pub froc_max_fp: f64,
    pub connectivity: Connectivity,
    pub ground_truth_objects: GroundTruthObjects,
    #[serde(with = "bootstrap_serde")]
    pub bootstrap: BootstrapConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            prob_threshold: PROB_THRESHOLD,
            iou_threshold: IOU_THRESHOLD,
            sensitivity_floor: SENSITIVITY_FLOOR,
            fp_per_scan: FP_PER_SCAN,
            target_sensitivity: TARGET_SENSITIVITY,
            froc_max_fp: 1.0,
            connectivity: Connectivity::TwentySix,
            ground_truth_objects: GroundTruthObjects::Components,
            bootstrap: BootstrapConfig::default(),
        }
    }
}

/// `BootstrapConfig` with strict keys and per-field defaults.
mod bootstrap_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields, default)]
    struct Strict {
        replications: usize,
        seed: u64,
    }

    impl Default for Strict {
        fn default() -> Self {
            let d = BootstrapConfig::default();
            Self {
                replications: d.replications,
                seed: d.seed,
            }
        }
    }

    pub fn serialize<S: serde::Serializer>(c: &BootstrapConfig, s: S) -> Result<S::Ok, S::Error> {
        Strict {
            replications: c.replications,
            seed: c.seed,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BootstrapConfig, D::Error> {
        let s = Strict::deserialize(d)?;
        Ok(BootstrapConfig {
            replications: s.replications,
            seed: s.seed,
        })
    }
}

/// Blinded reading batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuringConfig {
    /// Random-elastic condition; `augmentation.elastic_baseline` wins when set.
    pub elastic: ElasticBaseline,
}

/// Batchgenerators' default 3D elastic range is α ∈ [0, 900], σ ∈ [9, 13]
/// voxels; the batch uses the top amplitude and the mid-range σ.
pub const TURING_ELASTIC: ElasticBaseline = ElasticBaseline {
    alpha: 900.0,
    sigma: 11.0,
};

impl Default for TuringConfig {
    fn default() -> Self {
        Self {
            elastic: TURING_ELASTIC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub augmentation: AugmentationConfig,
    pub crop: CropConfig,
    pub metrics: MetricsConfig,
    pub turing: TuringConfig,
}

fn in_unit(name: &str, v: f64, open_low: bool) -> Result<()> {
    let ok = v.is_finite() && v <= 1.0 && if open_low { v > 0.0 } else { v >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("metrics.{name} = {v} is outside its range")))
    }
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read and validate; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_json(&text).map_err(|e| match e {
                    Error::Config(msg) => Error::Config(format!("{}: {msg}", p.display())),
                    other => other,
                })
            }
        }
    }

    /// Canonical form: pretty JSON in declaration order, every field present.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("in-memory JSON serialization")
    }

    pub fn validate(&self) -> Result<()> {
        self.augmentation.validate()?;
        let m = &self.metrics;
        in_unit("prob_threshold", m.prob_threshold, true)?;
        in_unit("iou_threshold", m.iou_threshold, true)?;
        in_unit("sensitivity_floor", m.sensitivity_floor, false)?;
        in_unit("target_sensitivity", m.target_sensitivity, true)?;
        if m.sensitivity_floor >= 1.0 {
            return Err(Error::Config("metrics.sensitivity_floor must be < 1".into()));
        }
        for (name, v) in [("fp_per_scan", m.fp_per_scan), ("froc_max_fp", m.froc_max_fp)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("metrics.{name} = {v} must be > 0")));
            }
        }
        if m.bootstrap.replications == 0 {
            return Err(Error::Config("metrics.bootstrap.replications must be ≥ 1".into()));
        }
        let e = self.turing.elastic;
        if !(e.alpha.is_finite() && e.alpha >= 0.0 && e.sigma.is_finite() && e.sigma > 0.0) {
            return Err(Error::Config("turing.elastic needs alpha ≥ 0 and sigma > 0".into()));
        }
        Ok(())
    }

    pub fn elastic(&self) -> ElasticBaseline {
        self.augmentation.elastic_baseline.unwrap_or(self.turing.elastic)
    }
}
