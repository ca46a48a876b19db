//! On-disk artifacts shared between stages.
//!
//! Each stage writes one JSON file wrapping its payload in an envelope that
//! carries the configuration hash and the seed. Readers check the hash, so
//! artifacts produced under different configurations never mix silently.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use driftatlas::{AxisResult, CoordinateFrame, CurvePath, PrototypeRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "artifact {artifact} was produced under configuration {found}, this run is {expected}: \
         rerun the earlier stages or restore the earlier configuration"
    )]
    ConfigMismatch {
        artifact: String,
        found: String,
        expected: String,
    },
    #[error("stage `{stage}` has not run: {path} is missing")]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error("stage error: {0}")]
    Stage(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for stage problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigMismatch { .. } => 2,
            CliError::MissingStage { .. } | CliError::Stage(_) => 3,
        }
    }

    pub fn stage<E: std::fmt::Display>(err: E) -> CliError {
        CliError::Stage(err.to_string())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub config_hash: String,
    pub seed: u64,
    pub stage: String,
    pub payload: T,
}

/// The principal axis of one prototype with its radial distances: the inward
/// drift curve to the mode and the outward continuation over the same
/// Euclidean span.
#[derive(Debug, Serialize, Deserialize)]
pub struct AxisArtifact {
    pub prototype: usize,
    pub axis: AxisResult,
    pub outward: CurvePath,
    pub euclid_inward: f64,
    pub riem_inward: f64,
    pub euclid_outward: f64,
    pub riem_outward: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameArtifact {
    pub prototype: usize,
    pub frame: CoordinateFrame,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub prototype: usize,
    /// Kept transverse direction ids, principal sweep first.
    pub selected: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConcordanceRow {
    pub prototype: usize,
    /// Gradient agreement at the sphere center between two samples.
    pub grad_cosine: f64,
    /// Axis separation between two samples, degrees from the origin,
    /// folded to [0, 90] so a mirror pole counts as the same axis line
    /// (a symmetric potential ties both poles exactly).
    pub angle_deg: f64,
    /// The unfolded axis-point separation.
    pub angle_raw_deg: f64,
    /// Selected-id overlap between two samples; deep runs only.
    pub overlap: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StationarityRow {
    pub residual: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub concordance: Vec<ConcordanceRow>,
    pub stationarity: Option<StationarityRow>,
    pub all_pass: bool,
}

pub const PROTOTYPES: &str = "prototypes";
pub const AXES: &str = "axes";
pub const GEODESICS: &str = "geodesics";
pub const COORDS: &str = "coords";
pub const VERIFY: &str = "verify";

/// The stage command that produces each artifact, for missing-stage errors.
fn producer(name: &str) -> &'static str {
    match name {
        PROTOTYPES => "prototypes",
        AXES => "axes",
        GEODESICS => "geodesics",
        COORDS => "coords",
        VERIFY => "verify",
        _ => "ingest or synthetic",
    }
}

pub fn store<T: Serialize>(
    dir: &Path,
    name: &str,
    hash: &str,
    seed: u64,
    payload: T,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::stage)?;
    let envelope = Envelope {
        config_hash: hash.to_string(),
        seed,
        stage: name.to_string(),
        payload,
    };
    let text = serde_json::to_string_pretty(&envelope).map_err(CliError::stage)?;
    std::fs::write(dir.join(format!("{name}.json")), text).map_err(CliError::stage)?;
    Ok(())
}

pub fn fetch<T: DeserializeOwned>(
    dir: &Path,
    name: &str,
    expected_hash: &str,
) -> Result<Envelope<T>, CliError> {
    let path = dir.join(format!("{name}.json"));
    let bytes = std::fs::read(&path).map_err(|_| CliError::MissingStage {
        stage: producer(name),
        path: path.clone(),
    })?;
    let envelope: Envelope<T> = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Stage(format!("{}: {e}", path.display())))?;
    if envelope.config_hash != expected_hash {
        return Err(CliError::ConfigMismatch {
            artifact: name.to_string(),
            found: envelope.config_hash,
            expected: expected_hash.to_string(),
        });
    }
    Ok(envelope)
}

/// The typed payloads, so stages agree on what each file holds.
pub type Prototypes = Vec<PrototypeRecord>;
pub type Axes = Vec<AxisArtifact>;
pub type Frames = Vec<FrameArtifact>;
pub type Selections = Vec<SelectionArtifact>;
