//! Map comparison metrics: pointwise errors, windowed SSIM, distribution
//! distances and direction agreement.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::descriptors::DescriptorMaps;
use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, wrap_angle, Mask, Raster};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Floor on the Bhattacharyya coefficient before taking the logarithm.
pub const BHATTACHARYYA_FLOOR: f64 = 1e-12;

fn masked_mean(pred: &Raster, gt: &Raster, mask: Option<&Mask>, f: impl Fn(f64) -> f64) -> Result<f64> {
    ensure_same_shape(pred, gt, "prediction vs ground truth")?;
    if let Some(m) = mask {
        ensure_same_shape(pred, m, "prediction vs mask")?;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if mask.is_none_or(|m| m.data[i]) {
            sum += f(pred.data[i] - gt.data[i]);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Mean squared difference over the masked (or all) cells.
pub fn mse(pred: &Raster, gt: &Raster, mask: Option<&Mask>) -> Result<f64> {
    masked_mean(pred, gt, mask, |d| d * d)
}

/// Mean absolute difference over the masked (or all) cells.
pub fn mae(pred: &Raster, gt: &Raster, mask: Option<&Mask>) -> Result<f64> {
    masked_mean(pred, gt, mask, f64::abs)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over every full 11×11 window position, Gaussian-weighted with
/// σ = 1.5 and dynamic range 1.
pub fn ssim(pred: &Raster, gt: &Raster) -> Result<f64> {
    ensure_same_shape(pred, gt, "prediction vs ground truth")?;
    let (w, h) = (pred.width, pred.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} cells, got {w}x{h}")));
    }
    let g = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(h - SSIM_WINDOW) {
        for c0 in 0..=(w - SSIM_WINDOW) {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (dr, gr) in g.iter().enumerate() {
                for (dc, gc) in g.iter().enumerate() {
                    let k = gr * gc;
                    let x = *pred.get(r0 + dr, c0 + dc);
                    let y = *gt.get(r0 + dr, c0 + dc);
                    mx += k * x;
                    my += k * y;
                    sxx += k * x * x;
                    syy += k * y * y;
                    sxy += k * x * y;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            let num = (2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2);
            let den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn distribution(a: &Raster) -> Result<Vec<f64>> {
    if a.data.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::validation("map", "distribution maps must be finite and non-negative"));
    }
    let mass = a.sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(a.data.iter().map(|v| v / mass).collect())
}

fn distributions(a: &Raster, b: &Raster) -> Result<(Vec<f64>, Vec<f64>)> {
    ensure_same_shape(a, b, "distribution maps")?;
    Ok((distribution(a)?, distribution(b)?))
}

/// Jensen–Shannon divergence in bits between the two maps, each normalized
/// to a distribution over cells. Lies in [0, 1].
pub fn js_divergence(a: &Raster, b: &Raster) -> Result<f64> {
    let (p, q) = distributions(a, b)?;
    Ok(js_of(&p, &q))
}

/// JS divergence of two already normalized distributions.
pub fn js_of(p: &[f64], q: &[f64]) -> f64 {
    let mut js = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            js += 0.5 * pi * (pi / m).log2();
        }
        if qi > 0.0 {
            js += 0.5 * qi * (qi / m).log2();
        }
    }
    js.clamp(0.0, 1.0)
}

/// `-ln` of the Bhattacharyya coefficient of the normalized maps.
pub fn bhattacharyya(a: &Raster, b: &Raster) -> Result<f64> {
    ensure_same_shape(a, b, "distribution maps")?;
    distribution(a)?;
    distribution(b)?;
    Ok(bhattacharyya_of(&a.data, &b.data))
}

/// Distance between two non-negative mass vectors, normalized internally.
/// Identical inputs give exactly 0.
pub fn bhattacharyya_of(p: &[f64], q: &[f64]) -> f64 {
    let mp: f64 = p.iter().sum();
    let mq: f64 = q.iter().sum();
    let overlap: f64 = p.iter().zip(q).map(|(x, y)| (x * y).sqrt()).sum();
    let bc = overlap / (mp * mq).sqrt();
    // the coefficient can exceed 1 by rounding; the distance stays non-negative
    (-bc.max(BHATTACHARYYA_FLOOR).ln()).max(0.0)
}

/// Mean of `(1 + cos Δθ) / 2` over cells with a valid direction in both maps.
pub fn angular_similarity(a: &DescriptorMaps, b: &DescriptorMaps) -> Result<f64> {
    angular_similarity_masked(a, b, None)
}

pub fn angular_similarity_masked(a: &DescriptorMaps, b: &DescriptorMaps, mask: Option<&Mask>) -> Result<f64> {
    check_maps(a, b, mask)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in jointly_valid(a, b, mask) {
        let ta = a.dir_sin.data[i].atan2(a.dir_cos.data[i]);
        let tb = b.dir_sin.data[i].atan2(b.dir_cos.data[i]);
        sum += 0.5 * (1.0 + (ta - tb).cos());
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    Ok(sum / n as f64)
}

fn check_maps(a: &DescriptorMaps, b: &DescriptorMaps, mask: Option<&Mask>) -> Result<()> {
    ensure_same_shape(&a.dir_cos, &b.dir_cos, "direction maps")?;
    if let Some(m) = mask {
        ensure_same_shape(&a.dir_cos, m, "direction maps vs mask")?;
    }
    Ok(())
}

fn jointly_valid<'a>(a: &'a DescriptorMaps, b: &'a DescriptorMaps, mask: Option<&'a Mask>) -> impl Iterator<Item = usize> + 'a {
    (0..a.dir_valid.len()).filter(move |&i| a.dir_valid.data[i] && b.dir_valid.data[i] && mask.is_none_or(|m| m.data[i]))
}

/// Direction bin of a `(cos, sin)` pair. Stored directions sit exactly on
/// bin edges, and `atan2` can return an angle a rounding error below the
/// edge, so angles within `1e-9` of a bin's start count as that bin.
pub fn direction_bin(cos: f64, sin: f64, bins: usize) -> usize {
    let x = wrap_angle(sin.atan2(cos)) * bins as f64 / TAU;
    ((x + 1e-9).floor() as usize) % bins
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionScores {
    pub accuracy: f64,
    pub iou: f64,
}

/// Binned direction accuracy and mean per-bin IoU over jointly valid
/// cells; the IoU mean runs over the bins that occur in `gt`.
pub fn direction_accuracy_iou(pred: &DescriptorMaps, gt: &DescriptorMaps, bins: usize) -> Result<DirectionScores> {
    direction_accuracy_iou_masked(pred, gt, bins, None)
}

pub fn direction_accuracy_iou_masked(pred: &DescriptorMaps, gt: &DescriptorMaps, bins: usize, mask: Option<&Mask>) -> Result<DirectionScores> {
    check_maps(pred, gt, mask)?;
    let mut inter = vec![0usize; bins];
    let mut in_pred = vec![0usize; bins];
    let mut in_gt = vec![0usize; bins];
    let mut n = 0usize;
    for i in jointly_valid(pred, gt, mask) {
        let bp = direction_bin(pred.dir_cos.data[i], pred.dir_sin.data[i], bins);
        let bg = direction_bin(gt.dir_cos.data[i], gt.dir_sin.data[i], bins);
        in_pred[bp] += 1;
        in_gt[bg] += 1;
        if bp == bg {
            inter[bp] += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    let hits: usize = inter.iter().sum();
    let present: Vec<usize> = (0..bins).filter(|&b| in_gt[b] > 0).collect();
    let iou = present
        .iter()
        .map(|&b| inter[b] as f64 / (in_pred[b] + in_gt[b] - inter[b]) as f64)
        .sum::<f64>()
        / present.len() as f64;
    Ok(DirectionScores {
        accuracy: hits as f64 / n as f64,
        iou,
    })
}

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Only cells the robot observed.
    Local,
    /// The whole map.
    Global,
}

/// Named metric values per descriptor, as written by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub version: u32,
    pub scope: Scope,
    /// Seconds.
    pub horizon: f64,
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MetricReport {
    pub fn get(&self, group: &str, name: &str) -> Option<f64> {
        self.metrics.get(group)?.get(name).copied()
    }
}

fn zero_outside(r: &Raster, mask: Option<&Mask>) -> Raster {
    match mask {
        None => r.clone(),
        Some(m) => Raster::from_fn(r.width, r.height, |row, col| if *m.get(row, col) { *r.get(row, col) } else { 0.0 }),
    }
}

/// Compares predicted against ground-truth maps. Local scope restricts every
/// metric to `mask`; SSIM then runs on both maps with unobserved cells zeroed.
pub fn evaluate_maps(pred: &DescriptorMaps, gt: &DescriptorMaps, scope: Scope, mask: Option<&Mask>, horizon: f64) -> Result<MetricReport> {
    if pred.spec != gt.spec {
        return Err(Error::SpecMismatch);
    }
    let mask = match scope {
        Scope::Global => None,
        Scope::Local => {
            let m = mask.ok_or_else(|| Error::validation("mask", "local scope needs a visibility mask"))?;
            if !m.data.iter().any(|&v| v) {
                return Err(Error::NoOverlap);
            }
            Some(m)
        }
    };
    let mut metrics = BTreeMap::new();
    for (name, p, g) in [("flow", &pred.flow, &gt.flow), ("entropy", &pred.entropy, &gt.entropy)] {
        let mut group = BTreeMap::new();
        group.insert("mse".to_string(), mse(p, g, mask)?);
        group.insert("mae".to_string(), mae(p, g, mask)?);
        group.insert("ssim".to_string(), ssim(&zero_outside(p, mask), &zero_outside(g, mask))?);
        metrics.insert(name.to_string(), group);
    }
    let scores = direction_accuracy_iou_masked(pred, gt, gt.bins, mask)?;
    let mut dir = BTreeMap::new();
    dir.insert("accuracy".to_string(), scores.accuracy);
    dir.insert("iou".to_string(), scores.iou);
    dir.insert("angular_similarity".to_string(), angular_similarity_masked(pred, gt, mask)?);
    metrics.insert("direction".to_string(), dir);
    Ok(MetricReport {
        version: REPORT_VERSION,
        scope,
        horizon,
        metrics,
    })
}
