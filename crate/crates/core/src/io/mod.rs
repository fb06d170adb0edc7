//! On-disk formats: float maps, previews, scene bundles, configs, and reports.

pub mod pfm;
pub mod pgm;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photon::Scene;
use crate::pipeline::{ReconConfig, RunStats};
use crate::scene_gen::{SceneKind, SceneParams};

pub const INTENSITY_FILE: &str = "intensity.pfm";
pub const DEPTH_FILE: &str = "depth.pfm";
pub const METADATA_FILE: &str = "scene.json";

/// Metadata stored next to the two float maps of a scene bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMetadata {
    pub side: usize,
    pub intensity_units: String,
    pub depth_units: String,
    pub kind: Option<SceneKind>,
    pub seed: Option<u64>,
    pub params: Option<SceneParams>,
}

impl SceneMetadata {
    pub fn generated(side: usize, kind: SceneKind, seed: u64, params: SceneParams) -> Self {
        SceneMetadata {
            side,
            intensity_units: "photons per pixel per dwell".into(),
            depth_units: "m".into(),
            kind: Some(kind),
            seed: Some(seed),
            params: Some(params),
        }
    }
}

/// A scene directory: `intensity.pfm`, `depth.pfm`, `scene.json`.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub scene: Scene,
    pub metadata: SceneMetadata,
}

impl SceneBundle {
    pub fn write(&self, dir: &Path) -> Result<()> {
        if self.metadata.side != self.scene.side() {
            return Err(Error::size(format!(
                "metadata side {} does not match map side {}",
                self.metadata.side,
                self.scene.side()
            )));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        pfm::write(&dir.join(INTENSITY_FILE), &self.scene.intensity)?;
        pfm::write(&dir.join(DEPTH_FILE), &self.scene.depth)?;
        write_json(&dir.join(METADATA_FILE), &self.metadata)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let intensity = pfm::read(&dir.join(INTENSITY_FILE))?;
        let depth = pfm::read(&dir.join(DEPTH_FILE))?;
        let metadata: SceneMetadata = read_json(&dir.join(METADATA_FILE))?;
        let scene = Scene::new(intensity, depth)?;
        if metadata.side != scene.side() {
            return Err(Error::size(format!(
                "metadata side {} does not match map side {}",
                metadata.side,
                scene.side()
            )));
        }
        Ok(SceneBundle { scene, metadata })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        kind: "JSON",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Reads and validates a reconstruction config; unknown fields are errors.
pub fn load_config(path: &Path) -> Result<ReconConfig> {
    let cfg: ReconConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// A PSNR value that serialises `+∞` as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Db(pub f64);

impl Serialize for Db {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() && self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Db {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Db(v)),
            Raw::Str(s) if s == "inf" => Ok(Db(f64::INFINITY)),
            Raw::Str(s) => Err(de::Error::custom(format!("unexpected PSNR string {s:?}"))),
        }
    }
}

pub const PEAK_CONVENTION: &str = "intensity peak = ground-truth maximum; depth peak = range gate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityReport {
    pub psnr_intensity_db: Option<Db>,
    pub psnr_depth_db: Option<Db>,
    pub compression_ratio: Option<f64>,
    pub patterns_per_stage: Vec<usize>,
    pub total_patterns: Option<usize>,
    pub reconstruction_time_s: Option<f64>,
    pub intensity_peak: Option<f64>,
    pub depth_peak_m: f64,
    pub peak_convention: String,
}

impl QualityReport {
    pub fn from_stats(stats: &RunStats) -> Self {
        QualityReport {
            psnr_intensity_db: stats.psnr_intensity_db.map(Db),
            psnr_depth_db: stats.psnr_depth_db.map(Db),
            compression_ratio: Some(stats.compression_ratio),
            patterns_per_stage: stats.patterns_per_stage.clone(),
            total_patterns: Some(stats.total_patterns),
            reconstruction_time_s: Some(stats.reconstruction_time_s),
            intensity_peak: stats.intensity_peak,
            depth_peak_m: stats.depth_peak_m,
            peak_convention: PEAK_CONVENTION.into(),
        }
    }

    /// Report for images compared outside a run (no acquisition statistics).
    pub fn metrics_only(
        psnr_intensity_db: Option<f64>,
        psnr_depth_db: f64,
        intensity_peak: Option<f64>,
        depth_peak_m: f64,
    ) -> Self {
        QualityReport {
            psnr_intensity_db: psnr_intensity_db.map(Db),
            psnr_depth_db: Some(Db(psnr_depth_db)),
            compression_ratio: None,
            patterns_per_stage: Vec::new(),
            total_patterns: None,
            reconstruction_time_s: None,
            intensity_peak,
            depth_peak_m,
            peak_convention: PEAK_CONVENTION.into(),
        }
    }
}

/// `<stem>.pgm` next to a float map, used for 8-bit previews.
pub fn preview_path(pfm_path: &Path) -> PathBuf {
    pfm_path.with_extension("pgm")
}
