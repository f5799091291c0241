//! Field-of-view model, the observation-only baseline that builds maps from
//! what the robot saw, and cropping of maps to the observed region.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::descriptors::{build_mod, BuildParams, DescriptorMaps, Normalization, TimeWindow};
use crate::error::{Error, Result};
use crate::geometry::{segment_blocked, Segment};
use crate::grid::{Detection, GridSpec, Mask, PoseStamped, Raster};
use crate::sim::RobotPath;

/// Camera cone about the robot heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FovSpec {
    /// Radians either side of the heading.
    pub half_angle: f64,
    /// Meters.
    pub max_range: f64,
    /// Whether walls block line of sight.
    pub occlusion: bool,
}

impl Default for FovSpec {
    fn default() -> Self {
        FovSpec {
            half_angle: FRAC_PI_4,
            max_range: 8.0,
            occlusion: true,
        }
    }
}

impl FovSpec {
    /// Sees every cell of any realistic map: all directions, no occlusion.
    pub fn full_coverage() -> Self {
        FovSpec {
            half_angle: PI,
            max_range: 1e9,
            occlusion: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_angle > 0.0 && self.half_angle <= PI) {
            return Err(Error::validation("half_angle", "must lie in (0, π]"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::validation("max_range", "must be positive"));
        }
        Ok(())
    }

    /// Whether `point` is inside the cone of a robot at `pose` and, with
    /// occlusion on, not hidden behind a wall.
    pub fn sees(&self, pose: &PoseStamped, point: (f64, f64), walls: &[Segment]) -> bool {
        let (dx, dy) = (point.0 - pose.x, point.1 - pose.y);
        let dist = dx.hypot(dy);
        if dist > self.max_range {
            return false;
        }
        if dist > 1e-12 && self.half_angle < PI {
            let off = (dy.atan2(dx) - pose.yaw() + PI).rem_euclid(TAU) - PI;
            if off.abs() > self.half_angle {
                return false;
            }
        }
        !(self.occlusion && segment_blocked([pose.x, pose.y], [point.0, point.1], walls))
    }
}

/// Cells seen at least once over some period.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMap {
    pub spec: GridSpec,
    pub visible: Mask,
}

impl VisibilityMap {
    pub fn none(spec: GridSpec) -> Self {
        VisibilityMap {
            spec,
            visible: Mask::filled(spec.width, spec.height, false),
        }
    }

    pub fn all(spec: GridSpec) -> Self {
        VisibilityMap {
            spec,
            visible: Mask::filled(spec.width, spec.height, true),
        }
    }

    pub fn count(&self) -> usize {
        self.visible.data.iter().filter(|&&v| v).count()
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (v, o) in self.visible.data.iter_mut().zip(&other.data) {
            *v |= *o;
        }
    }

    pub fn as_raster(&self) -> Raster {
        self.visible.map(|&v| if v { 1.0 } else { 0.0 })
    }
}

/// Cells whose centers the robot sees from `pose`.
pub fn visible_cells(pose: &PoseStamped, fov: &FovSpec, spec: &GridSpec, walls: &[Segment]) -> Mask {
    Raster::from_fn(spec.width, spec.height, |row, col| {
        fov.sees(pose, spec.cell_center(crate::grid::Cell::new(row, col)), walls)
    })
}

/// Keeps the detections whose cell is visible from the robot pose at the
/// detection time.
pub fn filter_detections(
    detections: &[Detection],
    path: &RobotPath,
    fov: &FovSpec,
    spec: &GridSpec,
    walls: &[Segment],
) -> Result<Vec<Detection>> {
    let mut kept = Vec::new();
    for d in detections {
        let pose = path.interpolate(d.t)?;
        let Ok(cell) = spec.world_to_cell(d.x, d.y) else {
            continue;
        };
        if fov.sees(&pose, spec.cell_center(cell), walls) {
            kept.push(*d);
        }
    }
    Ok(kept)
}

/// Union of the cells visible from every path pose inside `window`.
pub fn window_visibility(path: &RobotPath, fov: &FovSpec, spec: &GridSpec, walls: &[Segment], window: TimeWindow) -> VisibilityMap {
    let mut vis = VisibilityMap::none(*spec);
    for pose in path.poses_in(window.start, window.end()) {
        vis.union_with(&visible_cells(pose, fov, spec, walls));
    }
    vis
}

/// Observation-only baseline: maps built solely from detections inside the
/// robot's field of view, with never-observed cells marked invalid.
#[allow(clippy::too_many_arguments)]
pub fn local_stefmap(
    detections: &[Detection],
    path: &RobotPath,
    fov: &FovSpec,
    walls: &[Segment],
    window: TimeWindow,
    spec: GridSpec,
    params: &BuildParams,
    normalization: Normalization,
) -> Result<(DescriptorMaps, VisibilityMap)> {
    fov.validate()?;
    let in_window: Vec<Detection> = detections.iter().filter(|d| window.contains(d.t)).copied().collect();
    let seen = filter_detections(&in_window, path, fov, &spec, walls)?;
    let maps = build_mod(&seen, window, spec, params, normalization)?;
    let vis = window_visibility(path, fov, &spec, walls, window);
    let cropped = crop_local(&maps, &vis)?;
    Ok((cropped, vis))
}

/// Zeroes and invalidates every cell outside `vis`.
pub fn crop_local(maps: &DescriptorMaps, vis: &VisibilityMap) -> Result<DescriptorMaps> {
    if maps.spec != vis.spec {
        return Err(Error::SpecMismatch);
    }
    let mut out = maps.clone();
    for (i, &seen) in vis.visible.data.iter().enumerate() {
        if !seen {
            out.flow.data[i] = 0.0;
            out.flow_valid.data[i] = false;
            out.dir_cos.data[i] = 0.0;
            out.dir_sin.data[i] = 0.0;
            out.dir_valid.data[i] = false;
            out.entropy.data[i] = 0.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    fn spec() -> GridSpec {
        GridSpec::new(0.0, 0.0, 1.0, 10, 10).unwrap()
    }

    #[test]
    fn cone_examples() {
        let s = spec();
        let fov = FovSpec { half_angle: PI / 3.0, max_range: 6.0, occlusion: true };
        let pose = PoseStamped::from_yaw(0.0, 5.0, 5.0, 0.0);
        let vis = visible_cells(&pose, &fov, &s, &[]);
        // straight ahead at range/2
        assert!(*vis.get(5, 7));
        // directly behind
        assert!(!*vis.get(5, 1));
        // beyond range
        let far = FovSpec { max_range: 1.0, ..fov };
        assert!(!*visible_cells(&pose, &far, &s, &[]).get(5, 8));
    }

    #[test]
    fn wall_occludes_only_with_occlusion() {
        let s = spec();
        let wall = Segment::new(6.8, 0.0, 6.8, 10.0);
        let pose = PoseStamped::from_yaw(0.0, 5.0, 5.5, 0.0);
        let on = FovSpec::default();
        let off = FovSpec { occlusion: false, ..on };
        assert!(!*visible_cells(&pose, &on, &s, &[wall]).get(5, 8));
        assert!(*visible_cells(&pose, &off, &s, &[wall]).get(5, 8));
    }

    #[test]
    fn crop_examples() {
        let s = spec();
        let mut maps = DescriptorMaps::empty(s, 8);
        maps.flow.data.iter_mut().for_each(|f| *f = 2.0);
        maps.flow_valid.data.iter_mut().for_each(|v| *v = true);
        assert_eq!(crop_local(&maps, &VisibilityMap::all(s)).unwrap(), maps);
        let none = crop_local(&maps, &VisibilityMap::none(s)).unwrap();
        assert_eq!(none, DescriptorMaps::empty(s, 8));
        let other = VisibilityMap::none(GridSpec::new(0.0, 0.0, 1.0, 3, 3).unwrap());
        assert!(matches!(crop_local(&maps, &other), Err(Error::SpecMismatch)));
    }

    #[test]
    fn filter_requires_covered_times() {
        let path = RobotPath::new(vec![PoseStamped::from_yaw(0.0, 0.0, 0.0, 0.0), PoseStamped::from_yaw(1.0, 0.0, 0.0, 0.0)]).unwrap();
        let d = Detection::new(2.0, 1.0, 1.0, 0.0, None);
        let r = filter_detections(&[d], &path, &FovSpec::full_coverage(), &spec(), &[]);
        assert!(matches!(r, Err(Error::TimeOutOfRange { .. })));
        let d = Detection::new(0.5, 1.0, 1.0, 0.0, None);
        assert_eq!(filter_detections(&[d], &path, &FovSpec::full_coverage(), &spec(), &[]).unwrap(), vec![d]);
        let c = spec().world_to_cell(1.0, 1.0).unwrap();
        assert_eq!(c, Cell::new(1, 1));
    }
}
