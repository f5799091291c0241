//! Writes PNG renderings of each map layer for the queue scene.
//!
//! cargo run --example render -- [output-dir]

use std::path::PathBuf;

use modkit::io::render::{render, write_png, Layer};
use modkit::sim::{self, library, RunConfig};
use modkit::{build_mod, BuildParams, Normalization, TimeWindow};

fn main() -> modkit::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out)?;
    let (scene, path) = library::queue();
    let ds = sim::run(&scene, &path, &RunConfig::new(120.0, 0.1))?;
    let maps = build_mod(&ds.detections, TimeWindow::new(0.0, 120.0)?, scene.grid_spec()?, &BuildParams::default(), Normalization::Normalized { f_max: None })?;
    for (name, layer) in [("flow", Layer::Flow), ("entropy", Layer::Entropy), ("direction", Layer::Direction)] {
        let file = out.join(format!("queue_{name}.png"));
        write_png(&file, &render(&maps, layer, 8)?)?;
        println!("{}", file.display());
    }
    Ok(())
}
