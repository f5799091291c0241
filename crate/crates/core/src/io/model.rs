//! Trained predictor parameters: a single-row grid file holding the flat
//! parameter vector, plus a JSON manifest `<file>.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::predictor::{Layout, ModelParams, TrainConfig, LAYOUT};
use crate::sim::parse_json;

use super::atomic::write_atomic;
use super::gridfile::GridFile;
use super::maps::{sidecar_path, to_json_bytes};

pub const MODEL_VERSION: u32 = 1;
pub const PARAMS_CHANNEL: &str = "params";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub version: u32,
    pub layout: Layout,
    /// Flow scale the targets were normalized with.
    pub f_max: f64,
    pub bins: usize,
    pub train: TrainConfig,
}

impl ModelManifest {
    pub fn new(f_max: f64, bins: usize, train: TrainConfig) -> Self {
        ModelManifest {
            version: MODEL_VERSION,
            layout: LAYOUT,
            f_max,
            bins,
            train,
        }
    }
}

/// Parameters as they read back from a model file (f32 precision).
pub fn quantize_params(params: &ModelParams) -> ModelParams {
    ModelParams {
        data: params.data.iter().map(|&v| v as f32 as f64).collect(),
    }
}

pub fn write_model(path: &Path, params: &ModelParams, manifest: &ModelManifest) -> Result<()> {
    let spec = GridSpec::new(0.0, 0.0, 1.0, params.len(), 1)?;
    let mut g = GridFile::new(spec);
    g.push_f32(PARAMS_CHANNEL, params.data.iter().map(|&v| v as f32).collect())?;
    g.write(path)?;
    write_atomic(&sidecar_path(path), &to_json_bytes(manifest)?)
}

pub fn read_model(path: &Path) -> Result<(ModelParams, ModelManifest)> {
    let side = sidecar_path(path);
    let manifest: ModelManifest = parse_json(&std::fs::read_to_string(&side)?).map_err(|e| Error::format(&side, e))?;
    if manifest.version != MODEL_VERSION {
        return Err(Error::format(&side, format!("unsupported model version {}", manifest.version)));
    }
    if manifest.layout != LAYOUT {
        return Err(Error::format(&side, "parameter layout does not match this build"));
    }
    let g = GridFile::read(path)?;
    let c = g.channel(PARAMS_CHANNEL).ok_or_else(|| Error::format(path, "missing `params` channel"))?;
    let params = ModelParams::from_vec(c.values.iter().map(|&v| v as f64).collect()).map_err(|e| Error::format(path, e))?;
    Ok((params, manifest))
}

/// `epoch,loss` table of a training run.
pub fn format_loss_curve(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", i + 1));
    }
    out
}
