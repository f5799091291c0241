//! Trains the map predictor on the corridor scene and prints the loss curve.
//!
//! cargo run --release --example train_predictor

use modkit::predictor::{extract_windows, target_flow_scale, train, training_samples, TrainConfig, WindowConfig};
use modkit::sim::{self, library, RunConfig};

fn main() -> modkit::Result<()> {
    let (scene, path) = library::corridor_loop();
    let ds = sim::run(&scene, &path, &RunConfig::new(120.0, 0.1))?;
    let cfg = TrainConfig {
        learning_rate: 5e-3,
        epochs: 20,
        horizon: 10.0,
        input_window: 2.0,
        ..TrainConfig::default()
    };
    let windows = extract_windows(&ds, &WindowConfig::new(cfg.horizon, cfg.input_window, 2.0, scene.fov.unwrap_or_default()))?;
    let f_max = target_flow_scale(&windows);
    let samples = training_samples(&windows, f_max, &cfg)?;
    println!("{} windows, target flow scale {f_max:.1}", samples.len());

    let outcome = train(&samples, &cfg)?;
    for (epoch, l) in outcome.loss_curve.iter().enumerate() {
        println!("epoch {:>2}  loss {l:.5}", epoch + 1);
    }
    Ok(())
}
