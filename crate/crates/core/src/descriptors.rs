//! Flow, dominant-direction and directional-entropy maps built from
//! orientation histograms, plus the per-cell loss weight map.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bin_angle, Detection, GridSpec, HistogramGrid, Mask, Raster};

pub const DEFAULT_KAPPA: f64 = 1.5;
pub const DEFAULT_EPSILON: f64 = 1e-12;
pub const DEFAULT_W_VALID: f64 = 5.0;
pub const DEFAULT_W_BG: f64 = 0.95;
/// Quantile of positive per-cell flow used as the normalization scale.
pub const FLOW_SCALE_QUANTILE: f64 = 0.99;

/// Half-open time interval `[start, start + duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub duration: f64,
}

impl TimeWindow {
    pub fn new(start: f64, duration: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite() && start.is_finite()) {
            return Err(Error::validation("window.duration", "must be positive and finite"));
        }
        Ok(TimeWindow { start, duration })
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }

    /// Splits into `[start, mid)` and `[mid, end)`.
    pub fn halves(&self) -> (TimeWindow, TimeWindow) {
        let half = self.duration / 2.0;
        (
            TimeWindow { start: self.start, duration: half },
            TimeWindow {
                start: self.start + half,
                duration: self.end() - (self.start + half),
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub bins: usize,
    /// Dominance factor: the top bin must exceed `kappa * f / B`.
    pub kappa: f64,
    pub epsilon: f64,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            bins: crate::grid::DEFAULT_BINS,
            kappa: DEFAULT_KAPPA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::validation("bins", "need at least 2 orientation bins"));
        }
        if !(self.kappa >= 1.0) {
            return Err(Error::validation("kappa", "dominance factor must be >= 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::validation("epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// How flow and entropy values are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Normalization {
    /// Flow in detection counts, entropy in nats.
    #[default]
    Raw,
    /// Flow divided by `f_max` and clipped to `[0, 1]`, entropy divided by
    /// `ln B`. With `None`, `f_max` comes from the window itself.
    Normalized { f_max: Option<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionMaps {
    pub cos: Raster,
    pub sin: Raster,
    pub valid: Mask,
}

/// The three map-of-dynamics descriptors over one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMaps {
    pub spec: GridSpec,
    pub bins: usize,
    pub flow: Raster,
    pub flow_valid: Mask,
    pub dir_cos: Raster,
    pub dir_sin: Raster,
    pub dir_valid: Mask,
    pub entropy: Raster,
    /// Flow scale used, if the maps are normalized.
    pub f_max: Option<f64>,
}

pub fn compute_flow(hist: &HistogramGrid) -> Raster {
    let spec = hist.spec();
    let data = (0..spec.num_cells())
        .map(|i| hist.counts_at(i).iter().map(|&c| c as u64).sum::<u64>() as f64)
        .collect();
    Raster {
        width: spec.width,
        height: spec.height,
        data,
    }
}

pub fn compute_direction(hist: &HistogramGrid, kappa: f64) -> DirectionMaps {
    let spec = hist.spec();
    let bins = hist.bins();
    let mut cos = Raster::for_spec(spec);
    let mut sin = Raster::for_spec(spec);
    let mut valid = Mask::filled(spec.width, spec.height, false);
    for i in 0..spec.num_cells() {
        let counts = hist.counts_at(i);
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total == 0 {
            continue;
        }
        // first maximum wins ties
        let (best, &top) = counts
            .iter()
            .enumerate()
            .fold((0, &counts[0]), |acc, (b, c)| if *c > *acc.1 { (b, c) } else { acc });
        if top as f64 > kappa * total as f64 / bins as f64 {
            let angle = bin_angle(best, bins);
            cos.data[i] = angle.cos();
            sin.data[i] = angle.sin();
            valid.data[i] = true;
        }
    }
    DirectionMaps { cos, sin, valid }
}

pub fn compute_entropy(hist: &HistogramGrid, epsilon: f64) -> Raster {
    let spec = hist.spec();
    let data = (0..spec.num_cells())
        .map(|i| cell_entropy(hist.counts_at(i), epsilon))
        .collect();
    Raster {
        width: spec.width,
        height: spec.height,
        data,
    }
}

/// `-Σ p_b ln(p_b + ε)` over occupied bins; 0 for an empty cell. The ε
/// shift pushes a single-bin cell to about `-ε`, so the result is floored at 0.
pub fn cell_entropy(counts: &[u32], epsilon: f64) -> f64 {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut e = 0.0;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / total;
        e -= p * (p + epsilon).ln();
    }
    if e > 0.0 {
        e
    } else {
        0.0
    }
}

/// Accumulates the detections that fall inside `window`.
pub fn window_histogram<'a>(
    detections: impl IntoIterator<Item = &'a Detection>,
    window: TimeWindow,
    spec: GridSpec,
    bins: usize,
) -> Result<HistogramGrid> {
    let mut hist = HistogramGrid::new(spec, bins)?;
    hist.accumulate_all(detections.into_iter().filter(|d| window.contains(d.t)));
    Ok(hist)
}

impl DescriptorMaps {
    pub fn from_histogram(hist: &HistogramGrid, params: &BuildParams) -> DescriptorMaps {
        let flow = compute_flow(hist);
        let flow_valid = flow.map(|&f| f > 0.0);
        let dir = compute_direction(hist, params.kappa);
        let entropy = compute_entropy(hist, params.epsilon);
        DescriptorMaps {
            spec: *hist.spec(),
            bins: hist.bins(),
            flow,
            flow_valid,
            dir_cos: dir.cos,
            dir_sin: dir.sin,
            dir_valid: dir.valid,
            entropy,
            f_max: None,
        }
    }

    /// Maps with no motion anywhere.
    pub fn empty(spec: GridSpec, bins: usize) -> DescriptorMaps {
        let zeros = Raster::for_spec(&spec);
        let no = Mask::filled(spec.width, spec.height, false);
        DescriptorMaps {
            spec,
            bins,
            flow: zeros.clone(),
            flow_valid: no.clone(),
            dir_cos: zeros.clone(),
            dir_sin: zeros.clone(),
            dir_valid: no,
            entropy: zeros,
            f_max: None,
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.f_max.is_some()
    }

    /// Rescales raw maps: flow by `f_max` (clipped to `[0, 1]`), entropy by `ln B`.
    pub fn normalized(&self, f_max: f64) -> DescriptorMaps {
        assert!(self.f_max.is_none(), "maps are already normalized");
        let scale = if f_max > 0.0 { f_max } else { 1.0 };
        let ln_b = (self.bins as f64).ln();
        DescriptorMaps {
            flow: self.flow.map(|&f| (f / scale).clamp(0.0, 1.0)),
            entropy: self.entropy.map(|&e| e / ln_b),
            f_max: Some(scale),
            ..self.clone()
        }
    }

    /// Dominant direction angle in `[0, 2π)` of a direction-valid cell.
    pub fn angle_at(&self, index: usize) -> Option<f64> {
        self.dir_valid.data[index].then(|| crate::grid::wrap_angle(self.dir_sin.data[index].atan2(self.dir_cos.data[index])))
    }
}

/// Builds descriptor maps from the detections with `t` in `window`.
pub fn build_mod(
    detections: &[Detection],
    window: TimeWindow,
    spec: GridSpec,
    params: &BuildParams,
    normalization: Normalization,
) -> Result<DescriptorMaps> {
    params.validate()?;
    let hist = window_histogram(detections, window, spec, params.bins)?;
    let maps = DescriptorMaps::from_histogram(&hist, params);
    Ok(match normalization {
        Normalization::Raw => maps,
        Normalization::Normalized { f_max } => {
            let f_max = f_max.unwrap_or_else(|| flow_scale([&maps.flow]));
            maps.normalized(f_max)
        }
    })
}

/// 99th percentile of the positive per-cell flow values across `flows`;
/// falls back to 1 when no cell saw motion.
pub fn flow_scale<'a>(flows: impl IntoIterator<Item = &'a Raster>) -> f64 {
    let mut values: Vec<f64> = flows
        .into_iter()
        .flat_map(|r| r.data.iter().copied())
        .filter(|&f| f > 0.0)
        .collect();
    if values.is_empty() {
        return 1.0;
    }
    values.sort_by(f64::total_cmp);
    // nearest-rank percentile
    let rank = (FLOW_SCALE_QUANTILE * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// Per-cell loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub weights: Raster,
}

impl WeightMap {
    pub fn uniform(width: usize, height: usize, w: f64) -> WeightMap {
        WeightMap {
            weights: Raster::filled(width, height, w),
        }
    }

    pub fn from_mask(mask: &Mask, w_valid: f64, w_bg: f64) -> WeightMap {
        WeightMap {
            weights: mask.map(|&v| if v { w_valid } else { w_bg }),
        }
    }

    pub fn scaled(&self, c: f64) -> WeightMap {
        WeightMap {
            weights: self.weights.map(|&w| w * c),
        }
    }
}

/// `w_valid` on cells with observed motion, `w_bg` elsewhere.
pub fn weight_map(maps: &DescriptorMaps, w_valid: f64, w_bg: f64) -> Result<WeightMap> {
    if !(w_valid > 0.0 && w_bg > 0.0) {
        return Err(Error::validation("weights", "w_valid and w_bg must be positive"));
    }
    Ok(WeightMap::from_mask(&maps.flow_valid, w_valid, w_bg))
}

/// Largest possible entropy over `bins` bins for a given ε, i.e. the value
/// at the uniform histogram: `-ln(1/B + ε)`.
pub fn max_entropy(bins: usize, epsilon: f64) -> f64 {
    -(1.0 / bins as f64 + epsilon).ln()
}

/// Full angle of one orientation bin.
pub fn bin_width(bins: usize) -> f64 {
    TAU / bins as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use std::f64::consts::FRAC_PI_2;

    fn hist_with(counts: &[u32]) -> HistogramGrid {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 1, 1).unwrap();
        let mut h = HistogramGrid::new(spec, counts.len()).unwrap();
        h.cell_counts_mut(Cell::new(0, 0)).copy_from_slice(counts);
        h
    }

    #[test]
    fn flow_sums_bins() {
        assert_eq!(compute_flow(&hist_with(&[3, 0, 1, 0, 0, 0, 0, 0])).data, vec![4.0]);
        assert_eq!(compute_flow(&hist_with(&[0; 8])).data, vec![0.0]);
    }

    #[test]
    fn direction_examples() {
        let d = compute_direction(&hist_with(&[0, 0, 5, 1, 0, 0, 0, 0]), 1.5);
        assert!(d.valid.data[0]);
        assert!((d.cos.data[0] - FRAC_PI_2.cos()).abs() < 1e-15);
        assert_eq!(d.sin.data[0], 1.0);

        let d = compute_direction(&hist_with(&[1; 8]), 1.5);
        assert!(!d.valid.data[0]);
        assert_eq!((d.cos.data[0], d.sin.data[0]), (0.0, 0.0));
    }

    #[test]
    fn direction_ties_pick_lowest_bin() {
        let d = compute_direction(&hist_with(&[0, 4, 0, 0, 4, 0, 0, 0]), 1.0);
        assert!(d.valid.data[0]);
        assert!((d.sin.data[0] - (TAU / 8.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        let uniform = cell_entropy(&[1; 8], 1e-12);
        assert!((uniform - 8f64.ln()).abs() < 1e-9);
        assert!(cell_entropy(&[0, 0, 0, 9, 0, 0, 0, 0], 1e-12).abs() < 1e-11);
        let two = cell_entropy(&[2, 2, 0, 0, 0, 0, 0, 0], 1e-12);
        let direct = -2.0 * 0.5 * (0.5f64 + 1e-12).ln();
        assert_eq!(two, direct);
        assert!((two - 2f64.ln()).abs() < 1e-11);
        assert_eq!(cell_entropy(&[0; 8], 1e-12), 0.0);
    }

    #[test]
    fn window_is_half_open() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 2, 2).unwrap();
        let ds = [
            Detection::new(10.0, 0.5, 0.5, 0.0, None),
            Detection::new(20.0, 0.5, 0.5, 0.0, None),
        ];
        let maps = build_mod(&ds, TimeWindow::new(10.0, 10.0).unwrap(), spec, &BuildParams::default(), Normalization::Raw).unwrap();
        assert_eq!(maps.flow.sum(), 1.0);
    }

    #[test]
    fn empty_stream_gives_invalid_maps() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 3, 2).unwrap();
        let maps = build_mod(&[], TimeWindow::new(0.0, 5.0).unwrap(), spec, &BuildParams::default(), Normalization::Raw).unwrap();
        assert_eq!(maps, DescriptorMaps::empty(spec, 8));
    }

    #[test]
    fn weight_map_selects_by_flow_validity() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 2, 1).unwrap();
        let ds = [Detection::new(0.0, 0.5, 0.5, 0.0, None)];
        let maps = build_mod(&ds, TimeWindow::new(0.0, 1.0).unwrap(), spec, &BuildParams::default(), Normalization::Raw).unwrap();
        let w = weight_map(&maps, 5.0, 0.95).unwrap();
        assert_eq!(w.weights.data, vec![5.0, 0.95]);
        assert!(weight_map(&maps, 0.0, 1.0).is_err());
    }

    #[test]
    fn normalization_scales_and_clips() {
        let h = hist_with(&[5, 5, 0, 0, 0, 0, 0, 0]);
        let raw = DescriptorMaps::from_histogram(&h, &BuildParams::default());
        let n = raw.normalized(4.0);
        assert_eq!(n.flow.data[0], 1.0);
        assert!((n.entropy.data[0] - 2f64.ln() / 8f64.ln()).abs() < 1e-11);
        let n = raw.normalized(20.0);
        assert_eq!(n.flow.data[0], 0.5);
    }

    #[test]
    fn flow_scale_nearest_rank() {
        let r = Raster::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(flow_scale([&r]), 3.0);
        let many = Raster::from_vec(200, 1, (1..=200).map(|v| v as f64).collect()).unwrap();
        assert_eq!(flow_scale([&many]), 198.0);
        assert_eq!(flow_scale([&Raster::zeros(2, 2)]), 1.0);
    }
}
