//! Simulation datasets as a directory of three files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::parse_json;
use crate::sim::{Association, Dataset, RobotPathSpec, RunConfig, Scene, SensorNoise};

use super::atomic::write_atomic;
use super::maps::to_json_bytes;
use super::table::{format_detections, format_poses, read_detections, read_poses};

pub const DATASET_VERSION: u32 = 1;
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const POSES_FILE: &str = "poses.csv";
pub const METADATA_FILE: &str = "metadata.json";

/// Everything needed to interpret or regenerate the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetadata {
    pub version: u32,
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<SensorNoise>,
    pub association: Association,
    pub scene: Scene,
    pub robot_path: RobotPathSpec,
}

pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = DatasetMetadata {
        version: DATASET_VERSION,
        seed: ds.seed,
        dt: ds.config.dt,
        duration: ds.config.duration,
        noise: ds.config.noise,
        association: ds.config.association,
        scene: ds.scene.clone(),
        robot_path: ds.robot_path.clone(),
    };
    write_atomic(&dir.join(DETECTIONS_FILE), format_detections(&ds.detections).as_bytes())?;
    write_atomic(&dir.join(POSES_FILE), format_poses(&ds.poses).as_bytes())?;
    write_atomic(&dir.join(METADATA_FILE), &to_json_bytes(&meta)?)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(METADATA_FILE);
    let meta: DatasetMetadata = parse_json(&std::fs::read_to_string(&meta_path)?).map_err(|e| Error::format(&meta_path, e))?;
    if meta.version != DATASET_VERSION {
        return Err(Error::format(&meta_path, format!("unsupported dataset version {}", meta.version)));
    }
    meta.scene.validate().map_err(|e| Error::format(&meta_path, e))?;
    meta.robot_path.validate().map_err(|e| Error::format(&meta_path, e))?;
    let detections = read_detections(&dir.join(DETECTIONS_FILE))?;
    let poses = read_poses(&dir.join(POSES_FILE))?;
    Ok(Dataset {
        scene: meta.scene,
        robot_path: meta.robot_path,
        config: RunConfig {
            duration: meta.duration,
            dt: meta.dt,
            seed: Some(meta.seed),
            noise: meta.noise,
            association: meta.association,
        },
        seed: meta.seed,
        detections,
        poses,
    })
}
