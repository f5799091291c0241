//! Small convolutional predictor of global future maps from local,
//! field-of-view-limited observations and the robot pose.

mod features;
mod model;
mod optim;
mod train;
mod windows;

pub use features::{
    featurize, FeatureTensor, CHANNEL_NAMES, FEATURE_CHANNELS, OBSERVATION_CHANNELS, POSE_BLOB, POSE_BLOB_SIGMA, POSE_COS, POSE_SIN,
};
pub use model::{
    activation_pattern, backward, forward, loss, DropoutMask, Layout, LossBreakdown, ModelParams, Prediction, Targets, HIDDEN, LAYOUT, LEAKY_SLOPE,
    MIN_DIRECTION_NORM,
};
pub use optim::{polynomial_lr, AdamW};
pub use train::{augment, mean_loss, train, train_from, AugmentConfig, TrainConfig, TrainOutcome, TrainingSample};
pub use windows::{extract_windows, target_flow_scale, training_samples, window_starts, WindowConfig, WindowSample};
