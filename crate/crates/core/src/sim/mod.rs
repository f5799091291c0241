//! Deterministic 2D crowd simulator: scripted agents, wall clipping,
//! detection extraction and a detector imperfection model.

mod engine;
pub mod library;
mod robot;
mod scene;

pub use engine::{
    corrupt, emit_detections, greedy_nearest_neighbour, run, step, AgentState, Association, Dataset, RunConfig,
    SimState, DEFAULT_DT, MIN_DISPLACEMENT, WALL_MARGIN,
};
pub use robot::{Keyframe, RobotPath, RobotPathSpec, ROBOT_PATH_VERSION};
pub(crate) use scene::parse_json;
pub use scene::{AgentSpec, Annotation, Extent, Pattern, Scene, SensorNoise, SCENE_VERSION};
