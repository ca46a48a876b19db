//! Run configuration: a TOML document folded with command-line overrides.
//!
//! The resolved configuration is hashed (minus the output directory, which
//! changes where a run lives but not what it computes) and the hash is
//! embedded in every artifact, so stages from different configurations
//! refuse to mix.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// IDX image file on disk, scanned into patches.
    Mnist,
    /// Points drawn from the built-in analytic potential.
    Synthetic,
    /// Procedural digit-like images, scanned into patches.
    Glyphs,
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::Glyphs => "glyphs",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// IDX image file (`mnist` only).
    pub path: Option<PathBuf>,
    /// Images to take from the file or to generate (`mnist`, `glyphs`).
    pub images: usize,
    /// Square patch side for image scanning.
    pub patch_size: usize,
    pub scans_per_image: usize,
    /// Points to draw (`synthetic` only).
    pub count: usize,
    /// Axis scales of the synthetic potential.
    pub sigmas: Vec<f64>,
    /// Bending coefficients; zeros give a plain Gaussian.
    pub curls: Vec<f64>,
    /// Optional translation of the synthetic mode.
    pub shift: Vec<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Synthetic,
            path: None,
            images: 5000,
            patch_size: 7,
            scans_per_image: 10,
            count: 10_000,
            sigmas: vec![1.0, 0.3, 1.6],
            curls: vec![0.0, 0.5, 0.0],
            shift: vec![],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    /// Wide first-pass kernel for the mode search.
    pub coarse_beta: f64,
    /// Sharp kernel for refinement and all geometry.
    pub refine_beta: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            coarse_beta: 0.125,
            refine_beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereConfig {
    /// Nearest-member count of the data sphere (kernel context).
    pub data: usize,
    /// Nearest-member count of the coordinate sphere (shell radius).
    pub coord: usize,
    /// Subsample size for kernel evaluations.
    pub sample: usize,
}

impl Default for SphereConfig {
    fn default() -> Self {
        SphereConfig {
            data: 3200,
            coord: 800,
            sample: 800,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Mean-shift ascent starts for the prototype search.
    pub n_starts: usize,
    /// Moving-sample size for the ascents.
    pub ascent_sample: usize,
    /// Mode merge radius; unset derives it from the data spread.
    pub merge_radius: Option<f64>,
    /// Sweep half-angle for the transverse geodesics, radians.
    pub stop_angle: f64,
    /// Random sign vectors for the minimal-direction basis.
    pub zeta_samples: usize,
    /// Coordinates per chart (drift curve + principal + k−2 minimal).
    pub k: usize,
    /// Chart at most this many prototypes, in discovery order; 0 means all.
    pub max_charts: usize,
    /// Output directory for all artifacts.
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 17,
            n_starts: 16,
            ascent_sample: 400,
            merge_radius: None,
            stop_angle: PI / 2.0,
            zeta_samples: 2000,
            k: 3,
            max_charts: 0,
            out: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Largest allowed angle between axis points from two samples, degrees.
    pub angle_limit_deg: f64,
    /// Smallest allowed gradient agreement between two samples.
    pub grad_cos_min: f64,
    /// Smallest allowed selected-coordinate overlap (deep check).
    pub overlap_min: f64,
    /// Largest allowed stationary-density residual (synthetic data).
    pub stationarity_limit: f64,
    pub stationarity_step: f64,
    pub stationarity_points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            angle_limit_deg: 15.0,
            grad_cos_min: 0.9,
            overlap_min: 0.7,
            stationarity_limit: 1e-5,
            stationarity_step: 1e-3,
            stationarity_points: 27,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub density: DensityConfig,
    pub spheres: SphereConfig,
    pub run: RunSection,
    pub verify: VerifyConfig,
}

/// Values taken from command-line flags; every set field wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub data_sphere: Option<usize>,
    pub coord_sphere: Option<usize>,
    pub sample: Option<usize>,
    pub stop_angle: Option<f64>,
    pub k: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn apply(&mut self, over: &Overrides) {
        if let Some(v) = over.seed {
            self.run.seed = v;
        }
        if let Some(v) = over.beta {
            self.density.refine_beta = v;
        }
        if let Some(v) = over.data_sphere {
            self.spheres.data = v;
        }
        if let Some(v) = over.coord_sphere {
            self.spheres.coord = v;
        }
        if let Some(v) = over.sample {
            self.spheres.sample = v;
        }
        if let Some(v) = over.stop_angle {
            self.run.stop_angle = v;
        }
        if let Some(v) = over.k {
            self.run.k = v;
        }
        if let Some(v) = &over.out {
            self.run.out = v.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let positive = [
            ("dataset.images", self.dataset.images),
            ("dataset.patch_size", self.dataset.patch_size),
            ("dataset.scans_per_image", self.dataset.scans_per_image),
            ("dataset.count", self.dataset.count),
            ("spheres.data", self.spheres.data),
            ("spheres.coord", self.spheres.coord),
            ("spheres.sample", self.spheres.sample),
            ("run.n_starts", self.run.n_starts),
            ("run.ascent_sample", self.run.ascent_sample),
            ("run.zeta_samples", self.run.zeta_samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.density.coarse_beta > 0.0) || !(self.density.refine_beta > 0.0) {
            return bad("density betas must be positive".into());
        }
        if !(self.run.stop_angle > 0.0 && self.run.stop_angle <= PI) {
            return bad(format!(
                "run.stop_angle = {} must lie in (0, pi]",
                self.run.stop_angle
            ));
        }
        if self.run.k < 2 {
            return bad(format!("run.k = {} needs at least 2 coordinates", self.run.k));
        }
        if let Some(r) = self.run.merge_radius {
            if !(r > 0.0) {
                return bad("run.merge_radius must be positive when set".into());
            }
        }
        match self.dataset.kind {
            DatasetKind::Mnist => {
                if self.dataset.path.is_none() {
                    return bad("dataset.kind = \"mnist\" needs dataset.path".into());
                }
            }
            DatasetKind::Synthetic => {
                if self.dataset.sigmas.is_empty() {
                    return bad("dataset.kind = \"synthetic\" needs dataset.sigmas".into());
                }
                if !self.dataset.curls.is_empty()
                    && self.dataset.curls.len() != self.dataset.sigmas.len()
                {
                    return bad(format!(
                        "dataset.curls has {} entries for {} sigmas",
                        self.dataset.curls.len(),
                        self.dataset.sigmas.len()
                    ));
                }
                if !self.dataset.shift.is_empty()
                    && self.dataset.shift.len() != self.dataset.sigmas.len()
                {
                    return bad(format!(
                        "dataset.shift has {} entries for {} sigmas",
                        self.dataset.shift.len(),
                        self.dataset.sigmas.len()
                    ));
                }
            }
            DatasetKind::Glyphs => {}
        }
        Ok(())
    }

    /// Hash of everything that affects computed values. The output directory
    /// is excluded so the same run written elsewhere stays byte-identical.
    pub fn content_hash(&self) -> String {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        if let Some(run) = doc.get_mut("run").and_then(|r| r.as_object_mut()) {
            run.remove("out");
        }
        let canonical = serde_json::to_string(&doc).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}
