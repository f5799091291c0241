use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::first_hit;
use crate::grid::{Detection, PoseStamped};

use super::robot::RobotPathSpec;
use super::scene::{AgentSpec, Pattern, Scene, SensorNoise};

/// Displacements shorter than this emit no detection.
pub const MIN_DISPLACEMENT: f64 = 1e-4;
/// Stand-off kept from a wall when a move is clipped.
pub const WALL_MARGIN: f64 = 1e-3;
pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    /// Index of the waypoint being approached.
    pub target: usize,
    pub dwell_remaining: f64,
    pub active: bool,
    /// Set on the step an l-path agent re-enters at its first waypoint.
    pub respawned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub agents: Vec<AgentState>,
}

impl SimState {
    pub fn initial(scene: &Scene) -> SimState {
        let agents = scene
            .agents
            .iter()
            .map(|a| AgentState {
                x: a.waypoints[0][0],
                y: a.waypoints[0][1],
                target: 1,
                dwell_remaining: 0.0,
                active: false,
                respawned: false,
            })
            .collect();
        SimState { time: 0.0, agents }
    }
}

/// How detections get their motion direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Association {
    /// Ground-truth identities.
    #[default]
    Exact,
    /// Identities dropped and recovered by greedy nearest-neighbour matching.
    Associated,
}

/// Moves `from` towards `to`, stopping just short of the first wall crossed.
/// Returns the new point and whether a wall got in the way.
fn clipped_move(scene: &Scene, from: [f64; 2], to: [f64; 2]) -> ([f64; 2], bool) {
    match first_hit(from, to, &scene.walls) {
        None => (to, false),
        Some(s) => {
            let len = ((to[0] - from[0]).powi(2) + (to[1] - from[1]).powi(2)).sqrt();
            if len == 0.0 {
                return (from, true);
            }
            let keep = ((s * len - WALL_MARGIN) / len).max(0.0);
            (
                [from[0] + keep * (to[0] - from[0]), from[1] + keep * (to[1] - from[1])],
                true,
            )
        }
    }
}

fn arrive(spec: &AgentSpec, agent: &mut AgentState) {
    let n = spec.waypoints.len();
    let reached = agent.target;
    match spec.pattern {
        Pattern::LPath if reached == n - 1 => {
            agent.x = spec.waypoints[0][0];
            agent.y = spec.waypoints[0][1];
            agent.target = 1;
            agent.respawned = true;
        }
        Pattern::LPath => agent.target = reached + 1,
        Pattern::WaypointLoop => agent.target = (reached + 1) % n,
        Pattern::QueueThenGo => {
            agent.target = (reached + 1) % n;
            if spec.dwell_at.contains(&reached) && spec.dwell_time > 0.0 {
                agent.dwell_remaining = spec.dwell_time;
            }
        }
    }
}

fn advance_agent(scene: &Scene, spec: &AgentSpec, agent: &mut AgentState, dt: f64, noise: f64, tolerance: f64) {
    if agent.dwell_remaining > 0.0 {
        agent.dwell_remaining -= dt;
        if agent.dwell_remaining < 1e-9 {
            agent.dwell_remaining = 0.0;
        }
        return;
    }
    // Noisy agents rarely hit a waypoint exactly; they count as arrived once
    // inside the tolerance. Noise-free agents always land on it exactly.
    if spec.heading_noise_sigma > 0.0 {
        let [tx, ty] = spec.waypoints[agent.target];
        if (tx - agent.x).hypot(ty - agent.y) <= tolerance {
            arrive(spec, agent);
            if agent.dwell_remaining > 0.0 || agent.respawned {
                return;
            }
        }
    }
    let mut remaining = spec.speed * dt;
    // One hop per waypoint reached within this step, bounded.
    for _ in 0..=spec.waypoints.len() {
        if remaining <= 0.0 {
            break;
        }
        let [tx, ty] = spec.waypoints[agent.target];
        let dist = (tx - agent.x).hypot(ty - agent.y);
        if dist <= remaining {
            let (p, blocked) = clipped_move(scene, [agent.x, agent.y], [tx, ty]);
            [agent.x, agent.y] = p;
            if blocked {
                break;
            }
            remaining -= dist;
            arrive(spec, agent);
            if agent.dwell_remaining > 0.0 || agent.respawned {
                break;
            }
        } else {
            let heading = (ty - agent.y).atan2(tx - agent.x) + noise;
            let goal = [agent.x + remaining * heading.cos(), agent.y + remaining * heading.sin()];
            let (p, _) = clipped_move(scene, [agent.x, agent.y], goal);
            [agent.x, agent.y] = p;
            break;
        }
    }
}

/// Advances every agent by `dt`. Exactly one heading-noise sample is drawn
/// per agent per call, active or not, so the random stream is independent
/// of agent activity.
pub fn step<R: Rng + ?Sized>(scene: &Scene, state: &SimState, dt: f64, rng: &mut R) -> SimState {
    assert!(dt > 0.0, "dt must be positive");
    let tolerance = 0.5 * scene.cell_size;
    let mut next = state.clone();
    next.time = state.time + dt;
    for (spec, agent) in scene.agents.iter().zip(next.agents.iter_mut()) {
        let z: f64 = rng.sample(StandardNormal);
        agent.respawned = false;
        if !agent.active {
            if state.time + 1e-9 >= spec.start_offset {
                agent.active = true;
            } else {
                continue;
            }
        }
        advance_agent(scene, spec, agent, dt, spec.heading_noise_sigma * z, tolerance);
    }
    next
}

/// Detections for the transition `prev → next`, stamped with `next.time`.
pub fn emit_detections(scene: &Scene, prev: &SimState, next: &SimState, dt: f64, mode: Association) -> Vec<Detection> {
    let t = next.time;
    match mode {
        Association::Exact => prev
            .agents
            .iter()
            .zip(&next.agents)
            .enumerate()
            .filter(|(_, (a, b))| a.active && b.active && !b.respawned)
            .filter_map(|(i, (a, b))| displacement_detection(t, [a.x, a.y], [b.x, b.y], Some(i as u32)))
            .collect(),
        Association::Associated => {
            let before: Vec<[f64; 2]> = prev.agents.iter().filter(|a| a.active).map(|a| [a.x, a.y]).collect();
            let after: Vec<[f64; 2]> = next.agents.iter().filter(|a| a.active).map(|a| [a.x, a.y]).collect();
            let gate = 2.0 * scene.max_speed() * dt;
            let matches = greedy_nearest_neighbour(&before, &after, gate);
            matches
                .iter()
                .enumerate()
                .filter_map(|(j, m)| m.and_then(|i| displacement_detection(t, before[i], after[j], None)))
                .collect()
        }
    }
}

fn displacement_detection(t: f64, from: [f64; 2], to: [f64; 2], id: Option<u32>) -> Option<Detection> {
    let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
    (dx.hypot(dy) >= MIN_DISPLACEMENT).then(|| Detection::new(t, to[0], to[1], dy.atan2(dx), id))
}

/// For each point in `after`, the index of its matched point in `before`.
/// Pairs are taken closest-first, each point used at most once, and pairs
/// farther apart than `gate` are never matched.
pub fn greedy_nearest_neighbour(before: &[[f64; 2]], after: &[[f64; 2]], gate: f64) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in before.iter().enumerate() {
        for (j, b) in after.iter().enumerate() {
            let d = (b[0] - a[0]).hypot(b[1] - a[1]);
            if d <= gate {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used = vec![false; before.len()];
    let mut out = vec![None; after.len()];
    for (_, i, j) in pairs {
        if !used[i] && out[j].is_none() {
            used[i] = true;
            out[j] = Some(i);
        }
    }
    out
}

/// Applies the detector imperfection model. Each detection consumes the
/// same number of random draws whether or not it survives.
pub fn corrupt(detections: &[Detection], noise: &SensorNoise) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    detections
        .iter()
        .filter_map(|d| {
            let u: f64 = rng.random();
            let zx: f64 = rng.sample(StandardNormal);
            let zy: f64 = rng.sample(StandardNormal);
            let za: f64 = rng.sample(StandardNormal);
            (u >= noise.miss_rate).then(|| {
                Detection::new(
                    d.t,
                    d.x + noise.position_sigma * zx,
                    d.y + noise.position_sigma * zy,
                    d.alpha + noise.heading_sigma * za,
                    d.agent_id,
                )
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub duration: f64,
    pub dt: f64,
    /// Overrides the scene seed when set.
    pub seed: Option<u64>,
    pub noise: Option<SensorNoise>,
    pub association: Association,
}

impl RunConfig {
    pub fn new(duration: f64, dt: f64) -> Self {
        RunConfig {
            duration,
            dt,
            seed: None,
            noise: None,
            association: Association::Exact,
        }
    }

    /// Number of fixed steps; `dt` must divide `duration`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("dt", "must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::validation("duration", "must be positive"));
        }
        let n = (self.duration / self.dt).round();
        if n < 1.0 || (n * self.dt - self.duration).abs() > 1e-9 * self.duration.max(1.0) {
            return Err(Error::validation("dt", "must divide the duration into whole steps"));
        }
        Ok(n as usize)
    }
}

/// Simulation output: detections and one robot pose per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scene: Scene,
    pub robot_path: RobotPathSpec,
    pub config: RunConfig,
    pub seed: u64,
    pub detections: Vec<Detection>,
    pub poses: Vec<PoseStamped>,
}

impl Dataset {
    pub fn duration(&self) -> f64 {
        self.config.duration
    }

    pub fn robot_path(&self) -> Result<super::robot::RobotPath> {
        super::robot::RobotPath::new(self.poses.clone())
    }
}

/// Fixed-step rollout. Step `k` ends at `t = (k + 1) dt`; detections and the
/// robot pose are stamped with that time.
pub fn run(scene: &Scene, robot_path: &RobotPathSpec, config: &RunConfig) -> Result<Dataset> {
    scene.validate()?;
    robot_path.validate()?;
    if let Some(noise) = &config.noise {
        noise.validate()?;
    }
    let steps = config.steps()?;
    let seed = config.seed.unwrap_or(scene.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SimState::initial(scene);
    let mut detections = Vec::new();
    let mut poses = Vec::with_capacity(steps);
    for k in 0..steps {
        let mut next = step(scene, &state, config.dt, &mut rng);
        next.time = (k + 1) as f64 * config.dt;
        detections.extend(emit_detections(scene, &state, &next, config.dt, config.association));
        poses.push(robot_path.pose_at(next.time));
        state = next;
    }
    if let Some(noise) = &config.noise {
        detections = corrupt(&detections, noise);
    }
    Ok(Dataset {
        scene: scene.clone(),
        robot_path: robot_path.clone(),
        config: config.clone(),
        seed,
        detections,
        poses,
    })
}
