use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Segment;
use crate::grid::{GridSpec, DEFAULT_CELL_SIZE};
use crate::observability::FovSpec;

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Cycle through the waypoints forever.
    WaypointLoop,
    /// Walk first to last waypoint, then re-enter at the first.
    LPath,
    /// Loop, but wait `dwell_time` at each waypoint listed in `dwell_at`.
    QueueThenGo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub pattern: Pattern,
    pub waypoints: Vec<[f64; 2]>,
    /// m/s
    pub speed: f64,
    #[serde(default)]
    pub heading_noise_sigma: f64,
    #[serde(default)]
    pub dwell_time: f64,
    #[serde(default)]
    pub start_offset: f64,
    /// Waypoint indices where a queueing agent waits.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dwell_at: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

/// Labelled rectangle `[x0, y0, x1, y1]` marking a region of interest,
/// optionally with the expected travel heading through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub label: String,
    pub rect: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
}

impl Annotation {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.rect;
        x >= x0.min(x1) && x < x0.max(x1) && y >= y0.min(y1) && y < y0.max(y1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub extent: Extent,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    #[serde(default)]
    pub walls: Vec<Segment>,
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub annotations: Vec<Annotation>,
    /// Robot camera model for this scene; the toolkit default otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov: Option<FovSpec>,
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

fn check(ok: bool, path: impl FnOnce() -> String, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::validation(path(), message))
    }
}

fn finite_point(p: &[f64; 2]) -> bool {
    p[0].is_finite() && p[1].is_finite()
}

impl AgentSpec {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let field = |f: &str| format!("{prefix}.{f}");
        check(self.speed > 0.0 && self.speed.is_finite(), || field("speed"), "must be positive")?;
        check(self.waypoints.len() >= 2, || field("waypoints"), "need at least 2 waypoints")?;
        for (i, w) in self.waypoints.iter().enumerate() {
            check(finite_point(w), || format!("{prefix}.waypoints[{i}]"), "must be finite")?;
        }
        check(
            self.heading_noise_sigma >= 0.0 && self.heading_noise_sigma.is_finite(),
            || field("heading_noise_sigma"),
            "must be non-negative",
        )?;
        check(self.dwell_time >= 0.0 && self.dwell_time.is_finite(), || field("dwell_time"), "must be non-negative")?;
        check(self.start_offset >= 0.0 && self.start_offset.is_finite(), || field("start_offset"), "must be non-negative")?;
        for (i, &k) in self.dwell_at.iter().enumerate() {
            check(k < self.waypoints.len(), || format!("{prefix}.dwell_at[{i}]"), "waypoint index out of range")?;
        }
        Ok(())
    }
}

impl Scene {
    /// Parses and validates a scene document; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Scene> {
        let scene: Scene = parse_json(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.version == SCENE_VERSION, || "version".into(), "unsupported scene version")?;
        let e = &self.extent;
        check(
            [e.min_x, e.min_y, e.max_x, e.max_y].iter().all(|v| v.is_finite()) && e.max_x > e.min_x && e.max_y > e.min_y,
            || "extent".into(),
            "must be finite with max > min",
        )?;
        check(self.cell_size > 0.0 && self.cell_size.is_finite(), || "cell_size".into(), "must be positive")?;
        for (i, w) in self.walls.iter().enumerate() {
            check(w.is_finite(), || format!("walls[{i}]"), "endpoints must be finite")?;
        }
        for (i, a) in self.agents.iter().enumerate() {
            a.validate(&format!("agents[{i}]"))?;
        }
        if let Some(fov) = &self.fov {
            fov.validate().map_err(|e| match e {
                Error::Validation { path, message } => Error::validation(format!("fov.{path}"), message),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        self.grid_spec_with(self.cell_size)
    }

    pub fn grid_spec_with(&self, cell_size: f64) -> Result<GridSpec> {
        let e = &self.extent;
        GridSpec::covering(e.min_x, e.min_y, e.max_x, e.max_y, cell_size)
    }

    pub fn max_speed(&self) -> f64 {
        self.agents.iter().map(|a| a.speed).fold(0.0, f64::max)
    }

    pub fn annotations_labelled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Annotation> + 'a {
        self.annotations.iter().filter(move |a| a.label == label)
    }
}

/// Deserializes JSON, reporting type errors with the path of the field.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::validation(if path == "." { String::new() } else { path }, e.inner().to_string())
    })
}

/// Detector imperfection model: drops and jitters detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoise {
    pub position_sigma: f64,
    pub miss_rate: f64,
    pub heading_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SensorNoise {
    pub fn none() -> Self {
        SensorNoise {
            position_sigma: 0.0,
            miss_rate: 0.0,
            heading_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let noise: SensorNoise = parse_json(text)?;
        noise.validate()?;
        Ok(noise)
    }

    pub fn validate(&self) -> Result<()> {
        check((0.0..=1.0).contains(&self.miss_rate), || "miss_rate".into(), "must lie in [0, 1]")?;
        check(self.position_sigma >= 0.0 && self.position_sigma.is_finite(), || "position_sigma".into(), "must be non-negative")?;
        check(self.heading_sigma >= 0.0 && self.heading_sigma.is_finite(), || "heading_sigma".into(), "must be non-negative")?;
        Ok(())
    }
}

impl Default for SensorNoise {
    /// Corruption used for the detector-gap study: half the detections
    /// missed, 0.3 m position jitter, 0.3 rad heading jitter.
    fn default() -> Self {
        SensorNoise {
            position_sigma: 0.3,
            miss_rate: 0.5,
            heading_sigma: 0.3,
            seed: 0,
        }
    }
}
