//! Command-line front end. `run` parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 for invalid
//! arguments or configuration, 2 for runtime and data errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::descriptors::{build_mod, flow_scale, BuildParams, DescriptorMaps, Normalization, TimeWindow, DEFAULT_KAPPA};
use crate::error::{Error, Result};
use crate::io::maps::{read_maps, write_maps, MapsSidecar, MAPS_VERSION};
use crate::io::model::{format_loss_curve, quantize_params, read_model, write_model, ModelManifest};
use crate::io::render::{render, write_png, Layer};
use crate::io::report::{detector_gap, write_json};
use crate::io::{read_dataset, write_atomic, write_dataset};
use crate::metrics::{evaluate_maps, Scope};
use crate::observability::{local_stefmap, FovSpec};
use crate::predictor::{
    extract_windows, featurize, forward, target_flow_scale, train, training_samples, TrainConfig, WindowConfig,
};
use crate::sim::{self, Association, Dataset, RobotPathSpec, RunConfig, Scene, SensorNoise};

#[derive(Debug, Parser)]
#[command(name = "modkit", version, about = "Simulate crowds, build maps of dynamics, train and evaluate a map predictor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scene and write detections, robot poses and metadata.
    Simulate(SimulateArgs),
    /// Build flow, direction and entropy maps for one time window.
    BuildMod(BuildModArgs),
    /// Train the map predictor on one or more datasets.
    Train(TrainArgs),
    /// Compare predicted maps against ground truth.
    Evaluate(EvaluateArgs),
    /// Measure how much detector noise distorts the maps.
    DetectorGap(DetectorGapArgs),
    /// Render one map layer as a PNG image.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene JSON file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Robot path JSON file.
    #[arg(long)]
    pub robot_path: PathBuf,
    /// Overrides the scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step length, seconds.
    #[arg(long, default_value_t = sim::DEFAULT_DT)]
    pub dt: f64,
    /// Run length, seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// Detector noise JSON; detections are exact without it.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Drop agent identities and recover tracks by nearest-neighbour matching.
    #[arg(long)]
    pub associated: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Local,
    Global,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Scope {
        match s {
            ScopeArg::Local => Scope::Local,
            ScopeArg::Global => Scope::Global,
        }
    }
}

#[derive(Debug, Args)]
pub struct FovArgs {
    /// Half opening angle of the camera cone, radians.
    #[arg(long)]
    pub fov_half_angle: Option<f64>,
    /// Camera range, meters.
    #[arg(long)]
    pub fov_range: Option<f64>,
    /// Let the robot see through walls.
    #[arg(long)]
    pub no_occlusion: bool,
    /// See every cell: all directions, unlimited range, no occlusion.
    #[arg(long, conflicts_with_all = ["fov_half_angle", "fov_range", "no_occlusion"])]
    pub full_coverage: bool,
}

impl FovArgs {
    /// Command-line overrides on top of the scene's camera model.
    pub fn resolve(&self, scene: &Scene) -> Result<FovSpec> {
        if self.full_coverage {
            return Ok(FovSpec::full_coverage());
        }
        let mut fov = scene.fov.unwrap_or_default();
        if let Some(a) = self.fov_half_angle {
            fov.half_angle = a;
        }
        if let Some(r) = self.fov_range {
            fov.max_range = r;
        }
        if self.no_occlusion {
            fov.occlusion = false;
        }
        fov.validate()?;
        Ok(fov)
    }
}

#[derive(Debug, Args)]
pub struct BuildModArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Window start, seconds.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// Window length, seconds (typically 10 or 20).
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = crate::grid::DEFAULT_BINS)]
    pub bins: usize,
    /// Cell edge in meters; the scene's cell size by default.
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Use every detection (default).
    #[arg(long, conflicts_with = "local")]
    pub global: bool,
    /// Use only detections inside the robot's field of view.
    #[arg(long)]
    pub local: bool,
    #[command(flatten)]
    pub fov: FovArgs,
    /// Scale flow to [0, 1] and entropy by ln B.
    #[arg(long)]
    pub normalize: bool,
    /// Flow scale for --normalize; the window's own 99th percentile otherwise.
    #[arg(long, requires = "normalize")]
    pub f_max: Option<f64>,
    /// Output grid file; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directories; repeat for several.
    #[arg(long, required = true, num_args = 1..)]
    pub dataset: Vec<PathBuf>,
    /// Target window, seconds.
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    /// Observation window, seconds.
    #[arg(long, default_value_t = 2.0)]
    pub n: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Spacing of window starts, seconds.
    #[arg(long, default_value_t = 1.0)]
    pub stride: f64,
    #[command(flatten)]
    pub fov: FovArgs,
    /// Output model file; the manifest goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss-curve CSV; `<out>.loss.csv` by default.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted maps (grid file).
    #[arg(long, conflicts_with_all = ["model", "dataset"], required_unless_present = "model")]
    pub pred: Option<PathBuf>,
    /// Model file to predict with, together with --dataset and --t0.
    #[arg(long, requires = "dataset")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Window start for model predictions, seconds.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// Ground-truth maps (grid file).
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = ScopeArg::Global)]
    pub scope: ScopeArg,
    /// Grid file with a `visibility` channel for local scope; taken from the
    /// prediction when omitted.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectorGapArgs {
    /// Dataset with exact detections.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Detector noise JSON; 50 % misses with 0.3 m and 0.3 rad jitter by default.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayerArg {
    Flow,
    Entropy,
    Direction,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Maps grid file.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, value_enum)]
    pub layer: LayerArg,
    /// Pixels per cell.
    #[arg(long, default_value_t = 1)]
    pub scale: u32,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as i32
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::BuildMod(a) => build(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::DetectorGap(a) => gap(a),
        Command::Render(a) => render_cmd(a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let bytes = crate::io::maps::to_json_bytes(value)?;
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let scene = Scene::from_json(&read_text(&a.scene)?)?;
    let path = RobotPathSpec::from_json(&read_text(&a.robot_path)?)?;
    let noise = a.noise.as_deref().map(|p| read_text(p).and_then(|t| SensorNoise::from_json(&t))).transpose()?;
    let config = RunConfig {
        duration: a.duration,
        dt: a.dt,
        seed: a.seed,
        noise,
        association: if a.associated { Association::Associated } else { Association::Exact },
    };
    let ds = sim::run(&scene, &path, &config)?;
    write_dataset(&a.out, &ds)?;
    eprintln!("{} detections, {} poses", ds.detections.len(), ds.poses.len());
    println!("{}", a.out.display());
    Ok(())
}

/// The window `[t0, t0 + horizon)`, which must end within the run.
fn checked_window(ds: &Dataset, t0: f64, horizon: f64) -> Result<TimeWindow> {
    let w = TimeWindow::new(t0, horizon)?;
    if t0 < 0.0 {
        return Err(Error::validation("t0", "must be non-negative"));
    }
    if w.end() > ds.duration() + 1e-9 {
        return Err(Error::InsufficientData(format!(
            "window [{t0}, {}) s runs past the end of the {} s dataset",
            w.end(),
            ds.duration()
        )));
    }
    Ok(w)
}

fn build(a: &BuildModArgs) -> Result<()> {
    let ds = read_dataset(&a.dataset)?;
    let window = checked_window(&ds, a.t0, a.horizon)?;
    let spec = ds.scene.grid_spec_with(a.cell_size.unwrap_or(ds.scene.cell_size))?;
    let params = BuildParams {
        bins: a.bins,
        kappa: DEFAULT_KAPPA,
        ..BuildParams::default()
    };
    let normalization = if a.normalize { Normalization::Normalized { f_max: a.f_max } } else { Normalization::Raw };
    let (maps, vis, scope, fov) = if a.local {
        let fov = a.fov.resolve(&ds.scene)?;
        let path = ds.robot_path()?;
        let (maps, vis) = local_stefmap(&ds.detections, &path, &fov, &ds.scene.walls, window, spec, &params, normalization)?;
        (maps, Some(vis), Scope::Local, Some(fov))
    } else {
        (build_mod(&ds.detections, window, spec, &params, normalization)?, None, Scope::Global, None)
    };
    let sidecar = MapsSidecar {
        version: MAPS_VERSION,
        bins: a.bins,
        f_max: maps.f_max,
        scope,
        t0: a.t0,
        horizon: a.horizon,
        fov,
    };
    write_maps(&a.out, &maps, vis.as_ref(), &sidecar)?;
    println!("{}", a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        batch_size: a.batch_size,
        epochs: a.epochs,
        horizon: a.horizon,
        input_window: a.n,
        seed: a.seed,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let mut windows = Vec::new();
    let mut spec = None;
    for dir in &a.dataset {
        let ds = read_dataset(dir)?;
        let s = ds.scene.grid_spec()?;
        if *spec.get_or_insert(s) != s {
            return Err(Error::SpecMismatch);
        }
        let wc = WindowConfig::new(a.horizon, a.n, a.stride, a.fov.resolve(&ds.scene)?);
        // windows without any motion carry no training signal
        windows.extend(extract_windows(&ds, &wc)?.into_iter().filter(|w| w.target.flow.sum() > 0.0));
    }
    if windows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let f_max = target_flow_scale(&windows);
    let samples = training_samples(&windows, f_max, &cfg)?;
    eprintln!("training on {} windows", samples.len());
    let outcome = train(&samples, &cfg)?;
    let manifest = ModelManifest::new(f_max, crate::grid::DEFAULT_BINS, cfg);
    write_model(&a.out, &quantize_params(&outcome.params), &manifest)?;
    let curve_path = a.curve.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".loss.csv");
        PathBuf::from(s)
    });
    write_atomic(&curve_path, format_loss_curve(&outcome.loss_curve).as_bytes())?;
    println!("{}", a.out.display());
    Ok(())
}

/// Normalized copy of `maps`, leaving already normalized maps alone.
fn as_normalized(maps: DescriptorMaps, f_max: f64) -> DescriptorMaps {
    if maps.is_normalized() {
        maps
    } else {
        maps.normalized(f_max)
    }
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let (gt, gt_vis, gt_side) = read_maps(&a.gt)?;
    let (pred, pred_vis) = match (&a.pred, &a.model, &a.dataset) {
        (Some(p), _, _) => {
            let (maps, vis, _) = read_maps(p)?;
            let f_max = maps.f_max.or(gt.f_max).unwrap_or_else(|| flow_scale([&gt.flow]));
            (as_normalized(maps, f_max), vis)
        }
        (None, Some(m), Some(d)) => {
            let (params, manifest) = read_model(m)?;
            let ds = read_dataset(d)?;
            let spec = ds.scene.grid_spec()?;
            if spec != gt.spec {
                return Err(Error::SpecMismatch);
            }
            let t = &manifest.train;
            let input = checked_window(&ds, a.t0, t.input_window)?;
            let path = ds.robot_path()?;
            let fov = ds.scene.fov.unwrap_or_default();
            let params_b = BuildParams {
                bins: manifest.bins,
                ..BuildParams::default()
            };
            let local_scale = manifest.f_max * t.input_window / t.horizon;
            let norm = Normalization::Normalized { f_max: Some(local_scale) };
            let (local, vis) = local_stefmap(&ds.detections, &path, &fov, &ds.scene.walls, input, spec, &params_b, norm)?;
            let pose = path.interpolate(input.end())?;
            let features = featurize(&local, &vis, &pose)?;
            let maps = forward(&params, &features, None).to_maps(manifest.bins, manifest.f_max);
            (maps, Some(vis))
        }
        _ => return Err(Error::validation("pred", "give --pred, or --model with --dataset")),
    };
    let gt_f_max = pred.f_max.unwrap_or_else(|| flow_scale([&gt.flow]));
    let gt = as_normalized(gt, gt_f_max);
    let mask = match (&a.mask, a.scope) {
        (_, ScopeArg::Global) => None,
        (Some(path), ScopeArg::Local) => {
            let (_, vis, _) = read_maps(path)?;
            Some(vis.ok_or_else(|| Error::format(path, "no `visibility` channel"))?)
        }
        (None, ScopeArg::Local) => Some(
            pred_vis
                .or(gt_vis)
                .ok_or_else(|| Error::validation("mask", "local scope needs a visibility mask"))?,
        ),
    };
    let report = evaluate_maps(&pred, &gt, a.scope.into(), mask.as_ref().map(|v| &v.visible), gt_side.horizon)?;
    emit_json(&report, a.out.as_deref())
}

fn gap(a: &DetectorGapArgs) -> Result<()> {
    let ds = read_dataset(&a.dataset)?;
    let noise = match &a.noise {
        Some(p) => SensorNoise::from_json(&read_text(p)?)?,
        None => SensorNoise::default(),
    };
    let spec = ds.scene.grid_spec()?;
    let params = BuildParams::default();
    // covers every step, including detections stamped at the final time
    let window = TimeWindow::new(0.0, ds.duration() + ds.config.dt)?;
    let noisy = sim::corrupt(&ds.detections, &noise);
    let exact_maps = build_mod(&ds.detections, window, spec, &params, Normalization::Raw)?;
    let noisy_maps = build_mod(&noisy, window, spec, &params, Normalization::Raw)?;
    emit_json(&detector_gap(&exact_maps, &noisy_maps)?, a.out.as_deref())
}

fn render_cmd(a: &RenderArgs) -> Result<()> {
    let (maps, _, _) = read_maps(&a.grid)?;
    let layer = match a.layer {
        LayerArg::Flow => Layer::Flow,
        LayerArg::Entropy => Layer::Entropy,
        LayerArg::Direction => Layer::Direction,
    };
    write_png(&a.out, &render(&maps, layer, a.scale)?)?;
    println!("{}", a.out.display());
    Ok(())
}
