//! Detection and pose tables as CSV.
//!
//! Values are stored with 9 significant digits, printed in the shortest form
//! that reads back to the same rounded value, so a file that is read and
//! written again comes out byte-identical.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Detection, PoseStamped};

pub const DETECTIONS_HEADER: &str = "t,x,y,alpha,agent_id";
pub const POSES_HEADER: &str = "t,x,y,z,qx,qy,qz,qw";

/// `v` rounded to 9 significant digits, the precision kept in tables.
pub fn round_sig9(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.8e}").parse().expect("formatted float parses")
}

fn fmt(v: f64) -> String {
    let r = round_sig9(v);
    // avoid writing "-0"
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

/// The detection as it reads back from a table.
pub fn quantize_detection(d: &Detection) -> Detection {
    Detection {
        t: round_sig9(d.t),
        x: round_sig9(d.x),
        y: round_sig9(d.y),
        alpha: round_sig9(d.alpha),
        agent_id: d.agent_id,
    }
}

pub fn quantize_pose(p: &PoseStamped) -> PoseStamped {
    let [t, x, y, z, qx, qy, qz, qw] = [p.t, p.x, p.y, p.z, p.qx, p.qy, p.qz, p.qw].map(round_sig9);
    PoseStamped { t, x, y, z, qx, qy, qz, qw }
}

pub fn format_detections(detections: &[Detection]) -> String {
    let mut out = String::with_capacity(40 * (detections.len() + 1));
    out.push_str(DETECTIONS_HEADER);
    out.push('\n');
    for d in detections {
        let id = d.agent_id.map(|i| i.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{}\n", fmt(d.t), fmt(d.x), fmt(d.y), fmt(d.alpha), id));
    }
    out
}

pub fn format_poses(poses: &[PoseStamped]) -> String {
    let mut out = String::with_capacity(80 * (poses.len() + 1));
    out.push_str(POSES_HEADER);
    out.push('\n');
    for p in poses {
        let fields: Vec<String> = [p.t, p.x, p.y, p.z, p.qx, p.qy, p.qz, p.qw].iter().map(|&v| fmt(v)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn rows<'a>(text: &'a str, header: &str, path: &Path) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == header => {}
        _ => return Err(Error::format(path, format!("expected header `{header}`"))),
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 2, l.trim_end().split(',').collect())))
}

fn float(field: &str, line: usize, name: &str, path: &Path) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::format(path, format!("line {line}: `{name}` is not a finite number")))
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    let names = ["t", "x", "y", "alpha"];
    rows(text, DETECTIONS_HEADER, path)?
        .map(|(line, f)| {
            if f.len() != 5 {
                return Err(Error::format(path, format!("line {line}: expected 5 fields, got {}", f.len())));
            }
            let mut v = [0.0; 4];
            for k in 0..4 {
                v[k] = float(f[k], line, names[k], path)?;
            }
            let agent_id = match f[4] {
                "" => None,
                s => Some(s.parse().map_err(|_| Error::format(path, format!("line {line}: bad agent_id `{s}`")))?),
            };
            Ok(Detection {
                t: v[0],
                x: v[1],
                y: v[2],
                alpha: v[3],
                agent_id,
            })
        })
        .collect()
}

pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<PoseStamped>> {
    let names = ["t", "x", "y", "z", "qx", "qy", "qz", "qw"];
    rows(text, POSES_HEADER, path)?
        .map(|(line, f)| {
            if f.len() != 8 {
                return Err(Error::format(path, format!("line {line}: expected 8 fields, got {}", f.len())));
            }
            let mut v = [0.0; 8];
            for k in 0..8 {
                v[k] = float(f[k], line, names[k], path)?;
            }
            let [t, x, y, z, qx, qy, qz, qw] = v;
            Ok(PoseStamped { t, x, y, z, qx, qy, qz, qw })
        })
        .collect()
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    parse_detections(&std::fs::read_to_string(path)?, path)
}

pub fn read_poses(path: &Path) -> Result<Vec<PoseStamped>> {
    parse_poses(&std::fs::read_to_string(path)?, path)
}
