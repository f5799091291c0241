use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorMaps;
use crate::error::{Error, Result};
use crate::grid::bin_of;
use crate::metrics::{angular_similarity, bhattacharyya, bhattacharyya_of, js_divergence, js_of, MetricReport};
use crate::sim::parse_json;

use super::atomic::write_atomic;
use super::maps::to_json_bytes;

pub const GAP_REPORT_VERSION: u32 = 1;

/// Divergences between maps built from exact and from corrupted detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapReport {
    pub version: u32,
    pub flow: BTreeMap<String, f64>,
    pub direction: BTreeMap<String, f64>,
    pub entropy: BTreeMap<String, f64>,
}

/// Histogram of dominant-direction bins over direction-valid cells.
pub fn direction_histogram(maps: &DescriptorMaps) -> Vec<f64> {
    let mut h = vec![0.0; maps.bins];
    for i in 0..maps.dir_valid.len() {
        if let Some(a) = maps.angle_at(i) {
            h[bin_of(a, maps.bins)] += 1.0;
        }
    }
    h
}

/// Compares exact against corrupted maps. Flow and entropy are treated as
/// distributions over cells; direction as the distribution of dominant
/// direction bins.
pub fn detector_gap(exact: &DescriptorMaps, noisy: &DescriptorMaps) -> Result<GapReport> {
    if exact.spec != noisy.spec || exact.bins != noisy.bins {
        return Err(Error::SpecMismatch);
    }
    let pair = |js: f64, bh: f64| BTreeMap::from([("js".to_string(), js), ("bhattacharyya".to_string(), bh)]);
    let flow = pair(js_divergence(&exact.flow, &noisy.flow)?, bhattacharyya(&exact.flow, &noisy.flow)?);
    let entropy = pair(js_divergence(&exact.entropy, &noisy.entropy)?, bhattacharyya(&exact.entropy, &noisy.entropy)?);
    let (he, hn) = (direction_histogram(exact), direction_histogram(noisy));
    let (me, mn): (f64, f64) = (he.iter().sum(), hn.iter().sum());
    if me == 0.0 || mn == 0.0 {
        return Err(Error::ZeroMass);
    }
    let pe: Vec<f64> = he.iter().map(|v| v / me).collect();
    let pn: Vec<f64> = hn.iter().map(|v| v / mn).collect();
    let mut direction = pair(js_of(&pe, &pn), bhattacharyya_of(&he, &hn));
    direction.insert("angular_similarity".to_string(), angular_similarity(exact, noisy)?);
    Ok(GapReport {
        version: GAP_REPORT_VERSION,
        flow,
        direction,
        entropy,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value)?)
}

pub fn read_report(path: &Path) -> Result<MetricReport> {
    parse_json(&std::fs::read_to_string(path)?).map_err(|e| Error::format(path, e))
}

pub fn read_gap_report(path: &Path) -> Result<GapReport> {
    parse_json(&std::fs::read_to_string(path)?).map_err(|e| Error::format(path, e))
}
