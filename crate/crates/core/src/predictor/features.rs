use crate::descriptors::DescriptorMaps;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, PoseStamped, Raster};
use crate::observability::VisibilityMap;

pub const FEATURE_CHANNELS: usize = 8;
/// Channels 0..5 come from what the robot observed.
pub const OBSERVATION_CHANNELS: usize = 5;
pub const CHANNEL_NAMES: [&str; FEATURE_CHANNELS] = [
    "local_flow",
    "local_dir_cos",
    "local_dir_sin",
    "local_entropy",
    "visibility",
    "pose_blob",
    "pose_cos",
    "pose_sin",
];
pub const POSE_BLOB: usize = 5;
pub const POSE_COS: usize = 6;
pub const POSE_SIN: usize = 7;
/// Width of the pose bump, in cells.
pub const POSE_BLOB_SIGMA: f64 = 2.0;

/// Channel-major stack of per-cell input features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub spec: GridSpec,
    /// `data[ch * cells + index]`.
    pub data: Vec<f64>,
}

impl FeatureTensor {
    pub fn zeros(spec: GridSpec) -> Self {
        FeatureTensor {
            spec,
            data: vec![0.0; FEATURE_CHANNELS * spec.num_cells()],
        }
    }

    pub fn cells(&self) -> usize {
        self.spec.num_cells()
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.cells();
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.cells();
        &mut self.data[ch * n..(ch + 1) * n]
    }

    pub fn channel_raster(&self, ch: usize) -> Raster {
        Raster::from_vec(self.spec.width, self.spec.height, self.channel(ch).to_vec()).expect("channel has one value per cell")
    }

    /// Rewrites the pose channels for `pose`.
    pub fn set_pose(&mut self, pose: &PoseStamped) {
        let spec = self.spec;
        let (c, s) = (pose.yaw().cos(), pose.yaw().sin());
        let two_var = 2.0 * POSE_BLOB_SIGMA * POSE_BLOB_SIGMA;
        for cell in spec.cells() {
            let i = spec.index(cell);
            let (x, y) = spec.cell_center(cell);
            let d2 = ((x - pose.x).powi(2) + (y - pose.y).powi(2)) / (spec.cell_size * spec.cell_size);
            self.channel_mut(POSE_BLOB)[i] = (-d2 / two_var).exp();
        }
        self.channel_mut(POSE_COS).fill(c);
        self.channel_mut(POSE_SIN).fill(s);
    }

    pub fn zero_pose(&mut self) {
        for ch in POSE_BLOB..FEATURE_CHANNELS {
            self.channel_mut(ch).fill(0.0);
        }
    }
}

/// Stacks the observed maps, the visibility mask and the pose encoding.
/// Observation channels are zero wherever the robot saw nothing.
pub fn featurize(local: &DescriptorMaps, vis: &VisibilityMap, pose: &PoseStamped) -> Result<FeatureTensor> {
    if local.spec != vis.spec {
        return Err(Error::SpecMismatch);
    }
    let mut f = FeatureTensor::zeros(local.spec);
    let n = f.cells();
    for i in 0..n {
        if !vis.visible.data[i] {
            continue;
        }
        let dir = local.dir_valid.data[i];
        f.data[i] = local.flow.data[i];
        f.data[n + i] = if dir { local.dir_cos.data[i] } else { 0.0 };
        f.data[2 * n + i] = if dir { local.dir_sin.data[i] } else { 0.0 };
        f.data[3 * n + i] = local.entropy.data[i];
        f.data[4 * n + i] = 1.0;
    }
    f.set_pose(pose);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_maps_leave_only_pose() {
        let spec = GridSpec::new(0.0, 0.0, 1.0, 5, 5).unwrap();
        let pose = PoseStamped::from_yaw(0.0, 2.5, 2.5, 0.0);
        let f = featurize(&DescriptorMaps::empty(spec, 8), &VisibilityMap::all(spec), &pose).unwrap();
        assert!(f.channel(0).iter().all(|&v| v == 0.0));
        assert!(f.channel(4).iter().all(|&v| v == 1.0));
        let blob = f.channel(POSE_BLOB);
        let centre = spec.index(crate::grid::Cell::new(2, 2));
        assert_eq!(blob[centre], 1.0);
        assert!(blob.iter().all(|&v| v <= blob[centre]));
        assert!(f.channel(POSE_COS).iter().all(|&v| v == 1.0));
    }
}
