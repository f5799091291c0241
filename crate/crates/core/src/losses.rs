//! Weighted map losses. Every loss returns its value together with the exact
//! gradient with respect to the prediction.
//!
//! Conventions shared by all losses:
//! * the sum runs over every cell and is divided by the cell count;
//! * each cell's term is scaled by its weight `w_c`;
//! * spatial gradients are forward differences (the last column / row has
//!   none), and a difference is weighted by the cell it is anchored at.

use serde::{Deserialize, Serialize};

use crate::descriptors::{WeightMap, DEFAULT_W_BG, DEFAULT_W_VALID};
use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Huber transition point.
    pub beta: f64,
    /// Weight of the gradient-structure term.
    pub lambda_grad: f64,
    pub w_valid: f64,
    pub w_bg: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 0.1,
            lambda_grad: 1.0,
            w_valid: DEFAULT_W_VALID,
            w_bg: DEFAULT_W_BG,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::validation("beta", "must be positive"));
        }
        if !(self.lambda_grad >= 0.0) {
            return Err(Error::validation("lambda_grad", "must be non-negative"));
        }
        if !(self.w_valid > 0.0 && self.w_bg > 0.0) {
            return Err(Error::validation("weights", "must be positive"));
        }
        Ok(())
    }
}

/// A loss value and its gradient with respect to one prediction map.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Raster,
}

/// Value and gradients of a loss on a `(cos, sin)` prediction pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionLossGrad {
    pub value: f64,
    pub grad_cos: Raster,
    pub grad_sin: Raster,
}

fn check_shapes(pred: &Raster, gt: &Raster, w: &WeightMap) -> Result<()> {
    ensure_same_shape(pred, gt, "prediction vs ground truth")?;
    ensure_same_shape(pred, &w.weights, "prediction vs weight map")
}

/// Smooth-L1 term of a residual and its derivative with respect to the residual.
fn smooth_l1(diff: f64, beta: f64) -> (f64, f64) {
    if diff.abs() <= beta {
        (0.5 * diff * diff, diff)
    } else {
        (beta * diff.abs() - 0.5 * beta * beta, beta * diff.signum())
    }
}

/// Weighted Huber loss, quadratic for `|gt - pred| <= beta` and linear beyond.
pub fn huber_loss(pred: &Raster, gt: &Raster, w: &WeightMap, beta: f64) -> Result<LossGrad> {
    check_shapes(pred, gt, w)?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = Raster::zeros(pred.width, pred.height);
    for i in 0..pred.len() {
        let wc = w.weights.data[i];
        let (l, dl_ddiff) = smooth_l1(gt.data[i] - pred.data[i], beta);
        value += wc * l;
        // residual is gt - pred
        grad.data[i] = -wc * dl_ddiff / n;
    }
    Ok(LossGrad { value: value / n, grad })
}

/// Weighted squared mismatch of forward-difference spatial gradients.
pub fn grad_struct_loss(pred: &Raster, gt: &Raster, w: &WeightMap) -> Result<LossGrad> {
    check_shapes(pred, gt, w)?;
    let (width, height) = (pred.width, pred.height);
    if width < 2 || height < 2 {
        return Err(Error::TooSmall(format!("gradient loss needs at least 2x2 cells, got {width}x{height}")));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = Raster::zeros(width, height);
    for row in 0..height {
        for col in 0..width {
            let i = row * width + col;
            let wc = w.weights.data[i];
            if col + 1 < width {
                let j = i + 1;
                let r = (gt.data[j] - gt.data[i]) - (pred.data[j] - pred.data[i]);
                value += wc * r * r;
                let g = 2.0 * wc * r / n;
                grad.data[i] += g;
                grad.data[j] -= g;
            }
            if row + 1 < height {
                let j = i + width;
                let r = (gt.data[j] - gt.data[i]) - (pred.data[j] - pred.data[i]);
                value += wc * r * r;
                let g = 2.0 * wc * r / n;
                grad.data[i] += g;
                grad.data[j] -= g;
            }
        }
    }
    Ok(LossGrad { value: value / n, grad })
}

fn weighted_mse(pred: &Raster, gt: &Raster, w: &WeightMap) -> LossGrad {
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = Raster::zeros(pred.width, pred.height);
    for i in 0..pred.len() {
        let wc = w.weights.data[i];
        let r = gt.data[i] - pred.data[i];
        value += wc * r * r;
        grad.data[i] = -2.0 * wc * r / n;
    }
    LossGrad { value: value / n, grad }
}

/// Weighted MSE on the cosine channel plus weighted MSE on the sine channel.
pub fn angle_loss(pred_cos: &Raster, pred_sin: &Raster, gt_cos: &Raster, gt_sin: &Raster, w: &WeightMap) -> Result<DirectionLossGrad> {
    check_shapes(pred_cos, gt_cos, w)?;
    check_shapes(pred_sin, gt_sin, w)?;
    ensure_same_shape(pred_cos, pred_sin, "cosine vs sine channel")?;
    let c = weighted_mse(pred_cos, gt_cos, w);
    let s = weighted_mse(pred_sin, gt_sin, w);
    Ok(DirectionLossGrad {
        value: c.value + s.value,
        grad_cos: c.grad,
        grad_sin: s.grad,
    })
}

fn add_scaled(into: &mut Raster, from: &Raster, scale: f64) {
    for (a, b) in into.data.iter_mut().zip(&from.data) {
        *a += scale * b;
    }
}

/// Huber plus `lambda_grad` times the gradient-structure term; used for
/// both the flow and the entropy maps.
pub fn huber_struct_loss(pred: &Raster, gt: &Raster, w: &WeightMap, cfg: &LossConfig) -> Result<LossGrad> {
    let mut out = huber_loss(pred, gt, w, cfg.beta)?;
    if cfg.lambda_grad != 0.0 {
        let g = grad_struct_loss(pred, gt, w)?;
        out.value += cfg.lambda_grad * g.value;
        add_scaled(&mut out.grad, &g.grad, cfg.lambda_grad);
    }
    Ok(out)
}

pub fn flow_loss(pred: &Raster, gt: &Raster, w: &WeightMap, cfg: &LossConfig) -> Result<LossGrad> {
    huber_struct_loss(pred, gt, w, cfg)
}

pub fn entropy_loss(pred: &Raster, gt: &Raster, w: &WeightMap, cfg: &LossConfig) -> Result<LossGrad> {
    huber_struct_loss(pred, gt, w, cfg)
}

/// Angle loss plus `lambda_grad` times the gradient-structure term applied
/// to the cosine and sine channels separately.
pub fn direction_loss(
    pred_cos: &Raster,
    pred_sin: &Raster,
    gt_cos: &Raster,
    gt_sin: &Raster,
    w: &WeightMap,
    cfg: &LossConfig,
) -> Result<DirectionLossGrad> {
    let mut out = angle_loss(pred_cos, pred_sin, gt_cos, gt_sin, w)?;
    if cfg.lambda_grad != 0.0 {
        let gc = grad_struct_loss(pred_cos, gt_cos, w)?;
        let gs = grad_struct_loss(pred_sin, gt_sin, w)?;
        out.value += cfg.lambda_grad * (gc.value + gs.value);
        add_scaled(&mut out.grad_cos, &gc.grad, cfg.lambda_grad);
        add_scaled(&mut out.grad_sin, &gs.grad, cfg.lambda_grad);
    }
    Ok(out)
}

/// Default perturbation for [`finite_diff_check`].
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error in [`finite_diff_check`].
pub const FD_ABS_FLOOR: f64 = 1e-8;

/// Largest relative disagreement between the analytic gradient returned by
/// `f` and central differences with step `h`, over every coordinate of `x`.
pub fn finite_diff_check<F>(f: F, x: &[f64], h: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    finite_diff_check_floor(f, x, h, FD_ABS_FLOOR)
}

pub fn finite_diff_check_floor<F>(f: F, x: &[f64], h: f64, floor: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    assert!(h > 0.0);
    let (_, analytic) = f(x);
    assert_eq!(analytic.len(), x.len(), "gradient length must match input");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe).0;
        probe[i] = x[i] - h;
        let down = f(&probe).0;
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}
