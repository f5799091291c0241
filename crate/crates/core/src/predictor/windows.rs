use rayon::prelude::*;

use crate::descriptors::{build_mod, flow_scale, BuildParams, DescriptorMaps, Normalization, TimeWindow};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PoseStamped};
use crate::observability::{local_stefmap, FovSpec, VisibilityMap};
use crate::sim::Dataset;

use super::features::featurize;
use super::model::Targets;
use super::train::{TrainConfig, TrainingSample};

/// How a simulated run is cut into supervised windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    /// Target window length `T`, seconds.
    pub horizon: f64,
    /// Observation window length `n`, seconds.
    pub input_window: f64,
    /// Spacing of window starts, seconds.
    pub stride: f64,
    pub params: BuildParams,
    pub fov: FovSpec,
}

impl WindowConfig {
    pub fn new(horizon: f64, input_window: f64, stride: f64, fov: FovSpec) -> Self {
        WindowConfig {
            horizon,
            input_window,
            stride,
            params: BuildParams::default(),
            fov,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.input_window > 0.0 && self.input_window < self.horizon) {
            return Err(Error::validation("input_window", "must be positive and shorter than the horizon"));
        }
        if !(self.stride > 0.0) {
            return Err(Error::validation("stride", "must be positive"));
        }
        self.params.validate()?;
        self.fov.validate()
    }
}

/// Raw (count-valued) observation and target for one window start `t`:
/// the robot observes `[t, t + n)`, the target covers `[t, t + T)`, and the
/// pose is the robot's at `t + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub start: f64,
    pub pose: PoseStamped,
    pub local: DescriptorMaps,
    pub visibility: VisibilityMap,
    pub target: DescriptorMaps,
}

/// Window start times `0, stride, 2·stride, …` whose target fits in the run.
pub fn window_starts(duration: f64, horizon: f64, stride: f64) -> Result<Vec<f64>> {
    if horizon > duration + 1e-9 {
        return Err(Error::InsufficientData(format!("horizon {horizon} s exceeds the {duration} s run")));
    }
    let count = ((duration - horizon) / stride + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| k as f64 * stride).collect())
}

pub fn extract_windows(dataset: &Dataset, cfg: &WindowConfig) -> Result<Vec<WindowSample>> {
    cfg.validate()?;
    let spec: GridSpec = dataset.scene.grid_spec()?;
    let path = dataset.robot_path()?;
    let walls = &dataset.scene.walls;
    let starts = window_starts(dataset.duration(), cfg.horizon, cfg.stride)?;
    starts
        .par_iter()
        .map(|&t| {
            let input = TimeWindow::new(t, cfg.input_window)?;
            let target = TimeWindow::new(t, cfg.horizon)?;
            let (local, visibility) = local_stefmap(&dataset.detections, &path, &cfg.fov, walls, input, spec, &cfg.params, Normalization::Raw)?;
            let target = build_mod(&dataset.detections, target, spec, &cfg.params, Normalization::Raw)?;
            Ok(WindowSample {
                start: t,
                pose: path.interpolate(input.end())?,
                local,
                visibility,
                target,
            })
        })
        .collect()
}

/// Flow scale of a set of windows: the high quantile of positive target flow.
pub fn target_flow_scale(windows: &[WindowSample]) -> f64 {
    flow_scale(windows.iter().map(|w| &w.target.flow))
}

/// Normalizes windows and builds features and targets. Observed flow is
/// scaled by `f_max · n / T` so a steady flow reads the same in both.
pub fn training_samples(windows: &[WindowSample], f_max: f64, cfg: &TrainConfig) -> Result<Vec<TrainingSample>> {
    let local_scale = f_max * cfg.input_window / cfg.horizon;
    windows
        .iter()
        .map(|w| {
            let local = w.local.normalized(local_scale);
            let target = w.target.normalized(f_max);
            Ok(TrainingSample {
                features: featurize(&local, &w.visibility, &w.pose)?,
                pose: w.pose,
                targets: Targets::new(&target, &cfg.loss),
            })
        })
        .collect()
}
