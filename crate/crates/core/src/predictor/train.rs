use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PoseStamped;
use crate::losses::LossConfig;

use super::features::{FeatureTensor, OBSERVATION_CHANNELS};
use super::model::{backward, loss, DropoutMask, ModelParams, Targets, LAYOUT};
use super::optim::{polynomial_lr, AdamW};

/// Training-time perturbations of the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    /// Std of the multiplicative Gaussian factor on observation features.
    pub noise_sigma: f64,
    /// Probability of zeroing an individual observation feature.
    pub feature_dropout: f64,
    /// Max pose shift along each axis, meters.
    pub pose_translation: f64,
    /// Max pose rotation, radians.
    pub pose_rotation: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            noise_sigma: 0.1,
            feature_dropout: 0.01,
            pose_translation: 0.2,
            pose_rotation: 5f64.to_radians(),
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            noise_sigma: 0.0,
            feature_dropout: 0.0,
            pose_translation: 0.0,
            pose_rotation: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Probability of zeroing all pose channels of a sample.
    pub pose_dropout: f64,
    /// Probability of dropping a whole cell of the observation channels.
    pub input_dropout: f64,
    pub augment: AugmentConfig,
    /// Seconds of future motion the targets aggregate.
    pub horizon: f64,
    /// Seconds of observation the inputs aggregate.
    pub input_window: f64,
    /// Exponent of the learning-rate decay.
    pub lr_power: f64,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            batch_size: 8,
            epochs: 50,
            pose_dropout: 0.3,
            input_dropout: 0.2,
            augment: AugmentConfig::default(),
            horizon: 10.0,
            input_window: 2.0,
            lr_power: 1.0,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate", "must be non-negative"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::validation("weight_decay", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs", "must be at least 1"));
        }
        if !unit(self.pose_dropout) {
            return Err(Error::validation("pose_dropout", "must lie in [0, 1]"));
        }
        if !(self.input_dropout >= 0.0 && self.input_dropout < 1.0) {
            return Err(Error::validation("input_dropout", "must lie in [0, 1)"));
        }
        let a = &self.augment;
        if !(a.noise_sigma >= 0.0 && unit(a.feature_dropout) && a.pose_translation >= 0.0 && a.pose_rotation >= 0.0) {
            return Err(Error::validation("augment", "rates must lie in [0, 1] and magnitudes be non-negative"));
        }
        if !(self.input_window > 0.0 && self.input_window < self.horizon) {
            return Err(Error::validation("input_window", "must be positive and shorter than the horizon"));
        }
        if !(self.lr_power > 0.0) {
            return Err(Error::validation("lr_power", "must be positive"));
        }
        self.loss.validate()
    }
}

/// One supervised example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: FeatureTensor,
    /// Pose the pose channels were built from.
    pub pose: PoseStamped,
    pub targets: Targets,
}

/// Applies feature noise, feature dropout, pose jitter and pose dropout.
pub fn augment<R: Rng + ?Sized>(features: &FeatureTensor, pose: &PoseStamped, cfg: &TrainConfig, rng: &mut R) -> (FeatureTensor, PoseStamped) {
    let a = &cfg.augment;
    let mut f = features.clone();
    let obs = OBSERVATION_CHANNELS * f.cells();
    if a.noise_sigma > 0.0 {
        for v in &mut f.data[..obs] {
            let z: f64 = rng.sample(StandardNormal);
            *v *= 1.0 + a.noise_sigma * z;
        }
    }
    if a.feature_dropout > 0.0 {
        for v in &mut f.data[..obs] {
            if rng.random::<f64>() < a.feature_dropout {
                *v = 0.0;
            }
        }
    }
    let mut p = *pose;
    if a.pose_translation > 0.0 || a.pose_rotation > 0.0 {
        let dx = a.pose_translation * (2.0 * rng.random::<f64>() - 1.0);
        let dy = a.pose_translation * (2.0 * rng.random::<f64>() - 1.0);
        let dyaw = a.pose_rotation * (2.0 * rng.random::<f64>() - 1.0);
        p = PoseStamped {
            z: pose.z,
            ..PoseStamped::from_yaw(pose.t, pose.x + dx, pose.y + dy, pose.yaw() + dyaw)
        };
        f.set_pose(&p);
    }
    if cfg.pose_dropout > 0.0 && rng.random::<f64>() < cfg.pose_dropout {
        f.zero_pose();
    }
    (f, p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean inference-mode training loss after each epoch.
    pub loss_curve: Vec<f64>,
}

/// Mean inference-mode loss over `samples`.
pub fn mean_loss(params: &ModelParams, samples: &[TrainingSample], cfg: &LossConfig) -> Result<f64> {
    let per: Vec<f64> = samples
        .par_iter()
        .map(|s| loss(params, &s.features, &s.targets, cfg).map(|l| l.total()))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Trains from a seeded initialization.
pub fn train(samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_from(ModelParams::init(cfg.seed), samples, cfg)
}

/// Mini-batch AdamW with linear-to-zero learning-rate decay. Deterministic
/// for a fixed seed: per-sample randomness is drawn up front in sample
/// order and gradients are summed in batch order.
pub fn train_from(mut params: ModelParams, samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut opt = AdamW::new(LAYOUT.total, cfg.weight_decay);
    let batches_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.random()).collect();
            let grads: Vec<Vec<f64>> = batch
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(&i, &seed)| {
                    let s = &samples[i];
                    let mut srng = ChaCha8Rng::seed_from_u64(seed);
                    let (f, _) = augment(&s.features, &s.pose, cfg, &mut srng);
                    let mask = (cfg.input_dropout > 0.0).then(|| DropoutMask::sample(f.cells(), cfg.input_dropout, &mut srng));
                    backward(&params, &f, &s.targets, &cfg.loss, mask.as_ref()).map(|(_, g)| g)
                })
                .collect::<Result<_>>()?;
            let mut sum = vec![0.0; LAYOUT.total];
            for g in &grads {
                for (a, b) in sum.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            sum.iter_mut().for_each(|g| *g *= scale);
            let lr = polynomial_lr(cfg.learning_rate, step, total_steps, cfg.lr_power);
            opt.step(&mut params.data, &sum, lr);
            step += 1;
        }
        curve.push(mean_loss(&params, samples, &cfg.loss)?);
    }
    Ok(TrainOutcome { params, loss_curve: curve })
}
