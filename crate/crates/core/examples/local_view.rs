//! Compares what a moving robot sees against the full map.
//!
//! cargo run --example local_view

use modkit::sim::{self, library, RunConfig};
use modkit::{build_mod, local_stefmap, BuildParams, FovSpec, Normalization, TimeWindow};

fn main() -> modkit::Result<()> {
    let (scene, path) = library::office_l_path();
    let ds = sim::run(&scene, &path, &RunConfig::new(60.0, 0.1))?;
    let spec = scene.grid_spec()?;
    let robot = ds.robot_path()?;
    let params = BuildParams::default();

    for (label, fov) in [
        ("narrow, occluded", FovSpec { half_angle: 0.5, max_range: 5.0, occlusion: true }),
        ("default", scene.fov.unwrap_or_default()),
        ("see-through", FovSpec { occlusion: false, ..FovSpec::default() }),
        ("full coverage", FovSpec::full_coverage()),
    ] {
        for t0 in [0.0, 20.0, 40.0] {
            let window = TimeWindow::new(t0, 20.0)?;
            let global = build_mod(&ds.detections, window, spec, &params, Normalization::Raw)?;
            let (local, vis) = local_stefmap(&ds.detections, &robot, &fov, &scene.walls, window, spec, &params, Normalization::Raw)?;
            println!(
                "{label:<17} t0={t0:>4}  {:>5.1}% of cells seen  {:>6} of {:>6} detections kept",
                100.0 * vis.count() as f64 / spec.num_cells() as f64,
                local.flow.sum(),
                global.flow.sum(),
            );
        }
    }
    Ok(())
}
