//! End-to-end runs of the `modkit` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use modkit::io::maps::read_maps;
use modkit::io::report::{read_gap_report, read_report};

const BIN: &str = env!("CARGO_BIN_EXE_modkit");

fn scenes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes")
}

fn modkit(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = modkit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, scene: &str, name: &str, duration: &str) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "simulate",
        "--scene",
        p(&scenes().join(format!("{scene}.scene.json"))),
        "--robot-path",
        p(&scenes().join(format!("{scene}.path.json"))),
        "--duration",
        duration,
        "--out",
        p(&out),
    ]);
    out
}

fn edited_scene(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(scenes().join("corridor_loop.scene.json")).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("edited.scene.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_a_reproducible_dataset() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(tmp.path(), "corridor_loop", "a", "20");
    let b = simulate(tmp.path(), "corridor_loop", "b", "20");
    for f in ["detections.csv", "poses.csv", "metadata.json"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    assert_eq!(std::fs::read(a.join("detections.csv")).unwrap(), std::fs::read(b.join("detections.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("poses.csv")).unwrap(), std::fs::read(b.join("poses.csv")).unwrap());
}

#[test]
fn invalid_scene_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let scene = edited_scene(tmp.path(), |v| v["agents"][0]["speed"] = Value::from(0.0));
    let out = modkit(&[
        "simulate",
        "--scene",
        p(&scene),
        "--robot-path",
        p(&scenes().join("corridor_loop.path.json")),
        "--out",
        p(&tmp.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("agents[0].speed"));
    assert_eq!(modkit(&["simulate", "--bogus"]).status.code(), Some(1));
}

#[test]
fn build_mod_scopes_and_round_trip() {
    let tmp = TempDir::new().unwrap();
    let ds = simulate(tmp.path(), "junction", "ds", "30");
    let build = |name: &str, extra: &[&str]| -> PathBuf {
        let out = tmp.path().join(name);
        let mut args = vec!["build-mod", "--dataset", p(&ds), "--t0", "5", "--horizon", "10", "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let global = build("global.grid", &["--global"]);
    let full = build("full.grid", &["--local", "--full-coverage"]);
    let (g, _, gs) = read_maps(&global).unwrap();
    let (f, vis, _) = read_maps(&full).unwrap();
    assert_eq!(g.flow, f.flow);
    assert_eq!(g.entropy, f.entropy);
    assert_eq!(g.dir_valid, f.dir_valid);
    assert!(vis.unwrap().visible.data.iter().all(|&v| v));
    assert_eq!((gs.t0, gs.horizon), (5.0, 10.0));

    // a second write of the reloaded maps is byte-identical
    let again = tmp.path().join("again.grid");
    modkit::io::maps::write_maps(&again, &g, None, &gs).unwrap();
    assert_eq!(std::fs::read(&global).unwrap(), std::fs::read(&again).unwrap());
    let (g2, _, _) = read_maps(&again).unwrap();
    assert_eq!(g2, g);

    let late = modkit(&["build-mod", "--dataset", p(&ds), "--t0", "25", "--horizon", "10", "--out", p(&tmp.path().join("late.grid"))]);
    assert_eq!(late.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&late.stderr).contains("insufficient data"));
}

#[test]
fn train_is_deterministic_and_rejects_empty_data() {
    let tmp = TempDir::new().unwrap();
    let ds = simulate(tmp.path(), "corridor_loop", "ds", "20");
    let train = |name: &str| -> PathBuf {
        let out = tmp.path().join(name);
        ok(&["train", "--dataset", p(&ds), "--epochs", "2", "--stride", "4", "--seed", "3", "--out", p(&out)]);
        out
    };
    let (a, b) = (train("a.model"), train("b.model"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let curve = std::fs::read_to_string(tmp.path().join("a.model.loss.csv")).unwrap();
    assert_eq!(curve, std::fs::read_to_string(tmp.path().join("b.model.loss.csv")).unwrap());
    assert!(curve.lines().count() >= 2);

    let scene = edited_scene(tmp.path(), |v| {
        for agent in v["agents"].as_array_mut().unwrap() {
            agent["start_offset"] = Value::from(1e4);
        }
    });
    let quiet = tmp.path().join("quiet");
    ok(&["simulate", "--scene", p(&scene), "--robot-path", p(&scenes().join("corridor_loop.path.json")), "--duration", "20", "--out", p(&quiet)]);
    let out = modkit(&["train", "--dataset", p(&quiet), "--epochs", "1", "--out", p(&tmp.path().join("q.model"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset is empty"));
}

#[test]
fn evaluate_reports() {
    let tmp = TempDir::new().unwrap();
    let ds = simulate(tmp.path(), "corridor_loop", "ds", "30");
    let gt = tmp.path().join("gt.grid");
    ok(&["build-mod", "--dataset", p(&ds), "--horizon", "10", "--normalize", "--out", p(&gt)]);

    let report_path = tmp.path().join("self.json");
    ok(&["evaluate", "--pred", p(&gt), "--gt", p(&gt), "--out", p(&report_path)]);
    let report = read_report(&report_path).unwrap();
    assert_eq!(report.get("flow", "mse"), Some(0.0));
    assert_eq!(report.get("flow", "ssim"), Some(1.0));
    assert_eq!(report.get("direction", "accuracy"), Some(1.0));

    let raw: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let keys: Vec<&str> = raw.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["horizon", "metrics", "scope", "version"]);
    assert_eq!(raw["scope"], "global");
    assert_eq!(raw["horizon"], 10.0);
    let groups: Vec<&str> = raw["metrics"].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(groups, ["direction", "entropy", "flow"]);
    let flow_keys: Vec<&str> = raw["metrics"]["flow"].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(flow_keys, ["mae", "mse", "ssim"]);

    // the same report goes to stdout without --out
    let printed: Value = serde_json::from_str(&ok(&["evaluate", "--pred", p(&gt), "--gt", p(&gt)])).unwrap();
    assert_eq!(printed, raw);

    let blind = tmp.path().join("blind.grid");
    ok(&["build-mod", "--dataset", p(&ds), "--local", "--fov-half-angle", "0.01", "--fov-range", "0.01", "--normalize", "--out", p(&blind)]);
    let out = modkit(&["evaluate", "--pred", p(&blind), "--gt", p(&gt), "--scope", "local"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no jointly valid cells"));
}

#[test]
fn evaluate_runs_a_trained_model() {
    let tmp = TempDir::new().unwrap();
    let ds = simulate(tmp.path(), "corridor_loop", "ds", "20");
    let model = tmp.path().join("m.model");
    ok(&["train", "--dataset", p(&ds), "--epochs", "1", "--stride", "5", "--out", p(&model)]);
    let gt = tmp.path().join("gt.grid");
    ok(&["build-mod", "--dataset", p(&ds), "--t0", "2", "--horizon", "10", "--out", p(&gt)]);
    let report: Value = serde_json::from_str(&ok(&["evaluate", "--model", p(&model), "--dataset", p(&ds), "--t0", "2", "--gt", p(&gt)])).unwrap();
    for g in ["flow", "entropy"] {
        let mse = report["metrics"][g]["mse"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mse), "{g} mse {mse}");
    }
}

#[test]
fn detector_gap_without_noise_is_zero() {
    let tmp = TempDir::new().unwrap();
    let ds = simulate(tmp.path(), "junction", "ds", "20");
    let noise = tmp.path().join("none.json");
    std::fs::write(&noise, r#"{"miss_rate": 0.0, "position_sigma": 0.0, "heading_sigma": 0.0}"#).unwrap();
    let out = tmp.path().join("gap.json");
    ok(&["detector-gap", "--dataset", p(&ds), "--noise", p(&noise), "--out", p(&out)]);
    let gap = read_gap_report(&out).unwrap();
    for group in [&gap.flow, &gap.entropy, &gap.direction] {
        assert_eq!(group["js"], 0.0);
        assert_eq!(group["bhattacharyya"], 0.0);
    }
    assert_eq!(gap.direction["angular_similarity"], 1.0);
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let keys: Vec<&str> = raw.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["direction", "entropy", "flow", "version"]);
    let dir_keys: Vec<&str> = raw["direction"].as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(dir_keys, ["angular_similarity", "bhattacharyya", "js"]);
}

#[test]
fn render_sizes_and_blank_maps() {
    let tmp = TempDir::new().unwrap();
    let ds = simulate(tmp.path(), "corridor_loop", "ds", "20");
    let grid = tmp.path().join("m.grid");
    ok(&["build-mod", "--dataset", p(&ds), "--out", p(&grid)]);
    let (maps, _, _) = read_maps(&grid).unwrap();
    for (layer, scale) in [("flow", 1u32), ("entropy", 2), ("direction", 3)] {
        let png = tmp.path().join(format!("{layer}.png"));
        ok(&["render", "--grid", p(&grid), "--layer", layer, "--scale", &scale.to_string(), "--out", p(&png)]);
        let img = image::open(&png).unwrap();
        assert_eq!((img.width(), img.height()), (maps.spec.width as u32 * scale, maps.spec.height as u32 * scale));
    }

    let blind = tmp.path().join("blind.grid");
    ok(&["build-mod", "--dataset", p(&ds), "--local", "--fov-half-angle", "0.01", "--fov-range", "0.01", "--out", p(&blind)]);
    let png = tmp.path().join("blind.png");
    ok(&["render", "--grid", p(&blind), "--layer", "direction", "--out", p(&png)]);
    let img = image::open(&png).unwrap().to_rgb8();
    let first = *img.get_pixel(0, 0);
    assert!(img.pixels().all(|px| *px == first));
    assert_eq!(modkit(&["render", "--grid", p(&blind), "--layer", "flow", "--scale", "0", "--out", p(&png)]).status.code(), Some(1));
}
