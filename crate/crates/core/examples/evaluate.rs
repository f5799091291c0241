//! Scores a few simple map guesses against a held-out window.
//!
//! cargo run --example evaluate

use modkit::metrics::{evaluate_maps, Scope};
use modkit::sim::{self, library, RunConfig};
use modkit::{build_mod, local_stefmap, BuildParams, Normalization, TimeWindow};

fn main() -> modkit::Result<()> {
    let (scene, path) = library::corridor_loop();
    let ds = sim::run(&scene, &path, &RunConfig::new(90.0, 0.1))?;
    let spec = scene.grid_spec()?;
    let params = BuildParams::default();
    let build = |t0: f64| build_mod(&ds.detections, TimeWindow::new(t0, 20.0).unwrap(), spec, &params, Normalization::Raw);

    let gt_raw = build(60.0)?;
    let f_max = modkit::descriptors::flow_scale([&gt_raw.flow]);
    let gt = gt_raw.normalized(f_max);
    let earlier = build(0.0)?.normalized(f_max);
    let recent = build(30.0)?.normalized(f_max);

    let (_, vis) = local_stefmap(
        &ds.detections,
        &ds.robot_path()?,
        &scene.fov.unwrap_or_default(),
        &scene.walls,
        TimeWindow::new(60.0, 20.0)?,
        spec,
        &params,
        Normalization::Raw,
    )?;

    for (name, pred) in [("window at 0 s", &earlier), ("window at 30 s", &recent)] {
        for (scope, mask) in [(Scope::Global, None), (Scope::Local, Some(&vis.visible))] {
            let r = evaluate_maps(pred, &gt, scope, mask, 20.0)?;
            println!(
                "{name:<15} {scope:<7?} flow mse {:.4} ssim {:.3}  entropy mae {:.4}  direction acc {:.3} iou {:.3}",
                r.get("flow", "mse").unwrap(),
                r.get("flow", "ssim").unwrap(),
                r.get("entropy", "mae").unwrap(),
                r.get("direction", "accuracy").unwrap(),
                r.get("direction", "iou").unwrap(),
            );
        }
    }
    Ok(())
}
