//! Runs every shipped scene for a minute and summarizes the detections.
//!
//! cargo run --example simulate

use modkit::sim::{self, library, Association, RunConfig, SensorNoise};

fn main() -> modkit::Result<()> {
    for shipped in &library::SCENES {
        let (scene, path) = (shipped.scene(), shipped.robot_path());
        let exact = sim::run(&scene, &path, &RunConfig::new(60.0, 0.1))?;
        let noisy = sim::run(
            &scene,
            &path,
            &RunConfig {
                noise: Some(SensorNoise::default()),
                association: Association::Associated,
                ..RunConfig::new(60.0, 0.1)
            },
        )?;
        println!(
            "{:<14} {:>2} agents  {:>6} exact detections  {:>6} after noise and re-association  {} poses",
            shipped.name,
            scene.agents.len(),
            exact.detections.len(),
            noisy.detections.len(),
            exact.poses.len()
        );
    }
    Ok(())
}
