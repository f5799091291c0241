//! Builds flow, direction and entropy maps for the junction scene and prints
//! an ASCII view of the dominant directions.
//!
//! cargo run --example build_maps

use modkit::sim::{self, library, RunConfig};
use modkit::{build_mod, BuildParams, Normalization, TimeWindow};

fn arrow(angle: f64) -> char {
    const ARROWS: [char; 8] = ['→', '↗', '↑', '↖', '←', '↙', '↓', '↘'];
    ARROWS[modkit::grid::bin_of(angle + std::f64::consts::PI / 8.0, 8)]
}

fn main() -> modkit::Result<()> {
    let (scene, path) = library::junction();
    let ds = sim::run(&scene, &path, &RunConfig::new(120.0, 0.1))?;
    let spec = scene.grid_spec()?;
    let window = TimeWindow::new(20.0, 60.0)?;
    let maps = build_mod(&ds.detections, window, spec, &BuildParams::default(), Normalization::Normalized { f_max: None })?;

    let moving = maps.flow_valid.data.iter().filter(|&&v| v).count();
    let coherent = maps.dir_valid.data.iter().filter(|&&v| v).count();
    println!("{}x{} cells, {moving} with motion, {coherent} with a dominant direction", spec.width, spec.height);
    println!("flow scale {:.1} detections per cell", maps.f_max.unwrap());

    for row in (0..spec.height).rev() {
        let line: String = (0..spec.width)
            .map(|col| {
                let i = row * spec.width + col;
                match maps.angle_at(i) {
                    Some(a) => arrow(a),
                    None if maps.flow_valid.data[i] => '·',
                    None => ' ',
                }
            })
            .collect();
        println!("{line}");
    }
    Ok(())
}
