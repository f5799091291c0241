//! Descriptor maps on disk: a grid file plus a JSON sidecar `<file>.json`
//! with what the grid file cannot carry.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorMaps;
use crate::error::{Error, Result};
use crate::metrics::Scope;
use crate::observability::{FovSpec, VisibilityMap};
use crate::sim::parse_json;

use super::atomic::write_atomic;
use super::gridfile::GridFile;

pub const MAPS_VERSION: u32 = 1;
const CHANNELS: [&str; 6] = ["flow", "flow_valid", "dir_cos", "dir_sin", "dir_valid", "entropy"];
pub const VISIBILITY_CHANNEL: &str = "visibility";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapsSidecar {
    pub version: u32,
    pub bins: usize,
    /// Flow scale of normalized maps; absent for raw counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_max: Option<f64>,
    pub scope: Scope,
    /// Window start and length, seconds.
    pub t0: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov: Option<FovSpec>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn q(v: f64) -> f64 {
    v as f32 as f64
}

/// The maps as they read back from a grid file (values at f32 precision).
pub fn quantize_maps(maps: &DescriptorMaps) -> DescriptorMaps {
    DescriptorMaps {
        flow: maps.flow.map(|&v| q(v)),
        dir_cos: maps.dir_cos.map(|&v| q(v)),
        dir_sin: maps.dir_sin.map(|&v| q(v)),
        entropy: maps.entropy.map(|&v| q(v)),
        ..maps.clone()
    }
}

pub fn maps_to_grid(maps: &DescriptorMaps, vis: Option<&VisibilityMap>) -> Result<GridFile> {
    let mut g = GridFile::new(maps.spec);
    g.push(CHANNELS[0], &maps.flow)?;
    g.push_mask(CHANNELS[1], &maps.flow_valid)?;
    g.push(CHANNELS[2], &maps.dir_cos)?;
    g.push(CHANNELS[3], &maps.dir_sin)?;
    g.push_mask(CHANNELS[4], &maps.dir_valid)?;
    g.push(CHANNELS[5], &maps.entropy)?;
    if let Some(v) = vis {
        if v.spec != maps.spec {
            return Err(Error::SpecMismatch);
        }
        g.push_mask(VISIBILITY_CHANNEL, &v.visible)?;
    }
    Ok(g)
}

pub fn maps_from_grid(g: &GridFile, sidecar: &MapsSidecar, path: &Path) -> Result<(DescriptorMaps, Option<VisibilityMap>)> {
    let missing = |name: &str| Error::format(path, format!("missing channel `{name}`"));
    let r = |name: &str| g.raster(name).ok_or_else(|| missing(name));
    let m = |name: &str| g.mask(name).ok_or_else(|| missing(name));
    let maps = DescriptorMaps {
        spec: g.spec,
        bins: sidecar.bins,
        flow: r("flow")?,
        flow_valid: m("flow_valid")?,
        dir_cos: r("dir_cos")?,
        dir_sin: r("dir_sin")?,
        dir_valid: m("dir_valid")?,
        entropy: r("entropy")?,
        f_max: sidecar.f_max,
    };
    let vis = g.mask(VISIBILITY_CHANNEL).map(|visible| VisibilityMap { spec: g.spec, visible });
    Ok((maps, vis))
}

pub fn write_maps(path: &Path, maps: &DescriptorMaps, vis: Option<&VisibilityMap>, sidecar: &MapsSidecar) -> Result<()> {
    maps_to_grid(maps, vis)?.write(path)?;
    write_atomic(&sidecar_path(path), &to_json_bytes(sidecar)?)
}

pub fn read_sidecar(path: &Path) -> Result<MapsSidecar> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side)?;
    let s: MapsSidecar = parse_json(&text).map_err(|e| Error::format(&side, e))?;
    if s.version != MAPS_VERSION {
        return Err(Error::format(&side, format!("unsupported maps version {}", s.version)));
    }
    Ok(s)
}

pub fn read_maps(path: &Path) -> Result<(DescriptorMaps, Option<VisibilityMap>, MapsSidecar)> {
    let sidecar = read_sidecar(path)?;
    let g = GridFile::read(path)?;
    let (maps, vis) = maps_from_grid(&g, &sidecar, path)?;
    Ok((maps, vis, sidecar))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::validation("json", e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}
