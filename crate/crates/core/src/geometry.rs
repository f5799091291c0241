//! Planar segments and the intersection queries used for wall clipping and
//! line-of-sight tests.

use serde::{Deserialize, Serialize};

/// A wall segment, serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl From<[f64; 4]> for Segment {
    fn from(v: [f64; 4]) -> Self {
        Segment {
            a: [v[0], v[1]],
            b: [v[2], v[3]],
        }
    }
}

impl From<Segment> for [f64; 4] {
    fn from(s: Segment) -> Self {
        [s.a[0], s.a[1], s.b[0], s.b[1]]
    }
}

impl Segment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Segment {
            a: [x1, y1],
            b: [x2, y2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).all(|v| v.is_finite())
    }
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Parameter `s ∈ [0, 1]` along `p → q` where the path first touches `wall`,
/// or `None`. Parallel and collinear configurations count as no contact.
pub fn ray_hit(p: [f64; 2], q: [f64; 2], wall: &Segment) -> Option<f64> {
    let (rx, ry) = (q[0] - p[0], q[1] - p[1]);
    let (sx, sy) = (wall.b[0] - wall.a[0], wall.b[1] - wall.a[1]);
    let denom = cross(rx, ry, sx, sy);
    if denom.abs() < 1e-15 {
        return None;
    }
    let (wx, wy) = (wall.a[0] - p[0], wall.a[1] - p[1]);
    let s = cross(wx, wy, sx, sy) / denom;
    let u = cross(wx, wy, rx, ry) / denom;
    ((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&u)).then_some(s)
}

/// Earliest contact of `p → q` with any wall.
pub fn first_hit(p: [f64; 2], q: [f64; 2], walls: &[Segment]) -> Option<f64> {
    walls
        .iter()
        .filter_map(|w| ray_hit(p, q, w))
        .min_by(f64::total_cmp)
}

pub fn segment_blocked(p: [f64; 2], q: [f64; 2], walls: &[Segment]) -> bool {
    walls.iter().any(|w| ray_hit(p, q, w).is_some())
}

/// Signed side of `p` relative to the directed line through `wall`.
pub fn side_of(wall: &Segment, p: [f64; 2]) -> f64 {
    cross(
        wall.b[0] - wall.a[0],
        wall.b[1] - wall.a[1],
        p[0] - wall.a[0],
        p[1] - wall.a[1],
    )
}
