use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PoseStamped;

use super::scene::parse_json;

pub const ROBOT_PATH_VERSION: u32 = 1;

/// Timed sequence of robot poses, interpolated linearly in position and
/// spherically in orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotPath {
    poses: Vec<PoseStamped>,
}

impl RobotPath {
    pub fn new(poses: Vec<PoseStamped>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::validation("poses", "path needs at least one pose"));
        }
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::validation(format!("poses[{}].t", i + 1), "timestamps must be strictly increasing"));
            }
        }
        Ok(RobotPath { poses })
    }

    pub fn poses(&self) -> &[PoseStamped] {
        &self.poses
    }

    pub fn start(&self) -> f64 {
        self.poses[0].t
    }

    pub fn end(&self) -> f64 {
        self.poses[self.poses.len() - 1].t
    }

    /// Pose at time `t`; exact sample times return the stored pose unchanged.
    pub fn interpolate(&self, t: f64) -> Result<PoseStamped> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::TimeOutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        let i = self.poses.partition_point(|p| p.t <= t);
        let a = &self.poses[i - 1];
        if a.t == t || i == self.poses.len() {
            return Ok(PoseStamped { t, ..*a });
        }
        let b = &self.poses[i];
        let s = (t - a.t) / (b.t - a.t);
        let qa = a.quaternion();
        let qb = b.quaternion();
        let q = qa.try_slerp(&qb, s, 1e-12).unwrap_or(if s < 0.5 { qa } else { qb });
        let c = q.quaternion().coords;
        Ok(PoseStamped {
            t,
            x: a.x + s * (b.x - a.x),
            y: a.y + s * (b.y - a.y),
            z: a.z + s * (b.z - a.z),
            qx: c[0],
            qy: c[1],
            qz: c[2],
            qw: c[3],
        })
    }

    /// Poses with `t` inside `[start, end)`.
    pub fn poses_in(&self, start: f64, end: f64) -> impl Iterator<Item = &PoseStamped> {
        self.poses.iter().filter(move |p| p.t >= start && p.t < end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Heading about the vertical axis, radians.
    pub yaw: f64,
}

/// Robot trajectory configuration as stored in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotPathSpec {
    pub version: u32,
    pub keyframes: Vec<Keyframe>,
    /// Replay the keyframes with period equal to the last keyframe time.
    #[serde(default)]
    pub repeat: bool,
}

impl RobotPathSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: RobotPathSpec = parse_json(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn stationary(x: f64, y: f64, yaw: f64) -> Self {
        RobotPathSpec {
            version: ROBOT_PATH_VERSION,
            keyframes: vec![Keyframe { t: 0.0, x, y, yaw }],
            repeat: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != ROBOT_PATH_VERSION {
            return Err(Error::validation("version", "unsupported robot path version"));
        }
        if self.keyframes.is_empty() {
            return Err(Error::validation("keyframes", "need at least one keyframe"));
        }
        for (i, k) in self.keyframes.iter().enumerate() {
            if ![k.t, k.x, k.y, k.yaw].iter().all(|v| v.is_finite()) {
                return Err(Error::validation(format!("keyframes[{i}]"), "values must be finite"));
            }
            if i > 0 && !(k.t > self.keyframes[i - 1].t) {
                return Err(Error::validation(format!("keyframes[{i}].t"), "timestamps must be strictly increasing"));
            }
        }
        if self.repeat && !(self.keyframes[self.keyframes.len() - 1].t > self.keyframes[0].t) {
            return Err(Error::validation("repeat", "a repeating path needs a positive period"));
        }
        Ok(())
    }

    fn keyframe_path(&self) -> RobotPath {
        let poses = self
            .keyframes
            .iter()
            .map(|k| PoseStamped::from_yaw(k.t, k.x, k.y, k.yaw))
            .collect();
        RobotPath { poses }
    }

    /// Pose at simulation time `t`, holding the end poses outside the
    /// keyframe span (or wrapping, for repeating paths).
    pub fn pose_at(&self, t: f64) -> PoseStamped {
        let path = self.keyframe_path();
        let (start, end) = (path.start(), path.end());
        let local = if self.repeat {
            start + (t - start).rem_euclid(end - start)
        } else {
            t.clamp(start, end)
        };
        let pose = path.interpolate(local).expect("clamped into span");
        PoseStamped { t, ..pose }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_midpoint() {
        let path = RobotPath::new(vec![
            PoseStamped::from_yaw(0.0, 0.0, 0.0, 0.0),
            PoseStamped::from_yaw(2.0, 2.0, 4.0, 1.0),
        ])
        .unwrap();
        let p = path.interpolate(1.0).unwrap();
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
        assert!((p.yaw() - 0.5).abs() < 1e-9);
        assert_eq!(path.interpolate(2.0).unwrap(), path.poses()[1]);
        assert!(matches!(path.interpolate(2.5), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn rejects_non_increasing_times() {
        let p = PoseStamped::from_yaw(1.0, 0.0, 0.0, 0.0);
        assert!(RobotPath::new(vec![p, p]).is_err());
    }

    #[test]
    fn repeating_spec_wraps() {
        let spec = RobotPathSpec {
            version: 1,
            keyframes: vec![
                Keyframe { t: 0.0, x: 0.0, y: 0.0, yaw: 0.0 },
                Keyframe { t: 10.0, x: 10.0, y: 0.0, yaw: 0.0 },
            ],
            repeat: true,
        };
        assert!((spec.pose_at(13.0).x - 3.0).abs() < 1e-12);
        let clamped = RobotPathSpec { repeat: false, ..spec };
        assert_eq!(clamped.pose_at(13.0).x, 10.0);
        assert_eq!(clamped.pose_at(13.0).t, 13.0);
    }
}
