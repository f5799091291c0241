//! Sweeps detector noise and reports how far the resulting maps drift.
//!
//! cargo run --example detector_gap

use modkit::io::detector_gap;
use modkit::sim::{self, library, RunConfig, SensorNoise};
use modkit::{build_mod, BuildParams, Normalization, TimeWindow};

fn main() -> modkit::Result<()> {
    let (scene, path) = library::junction();
    let ds = sim::run(&scene, &path, &RunConfig::new(300.0, 0.1))?;
    let spec = scene.grid_spec()?;
    let window = TimeWindow::new(0.0, 300.1)?;
    let params = BuildParams::default();
    let exact = build_mod(&ds.detections, window, spec, &params, Normalization::Raw)?;

    println!("miss  pos σ  head σ   flow JS  entropy JS  direction JS  angular sim");
    for (miss, pos, head) in [(0.1, 0.05, 0.05), (0.3, 0.15, 0.15), (0.5, 0.3, 0.3), (0.7, 0.5, 0.6)] {
        let noise = SensorNoise { miss_rate: miss, position_sigma: pos, heading_sigma: head, seed: 1 };
        let noisy = build_mod(&sim::corrupt(&ds.detections, &noise), window, spec, &params, Normalization::Raw)?;
        let gap = detector_gap(&exact, &noisy)?;
        println!(
            "{miss:>4}  {pos:>5}  {head:>6}   {:>7.4}  {:>10.4}  {:>12.4}  {:>11.4}",
            gap.flow["js"], gap.entropy["js"], gap.direction["js"], gap.direction["angular_similarity"]
        );
    }
    Ok(())
}
