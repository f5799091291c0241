use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::descriptors::{DescriptorMaps, WeightMap};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Mask, Raster};
use crate::losses::{direction_loss, entropy_loss, flow_loss, LossConfig};

use super::features::{FeatureTensor, FEATURE_CHANNELS, OBSERVATION_CHANNELS};

pub const HIDDEN: usize = 16;
pub const LEAKY_SLOPE: f64 = 0.01;
const K: usize = 3;

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub conv1_w: usize,
    pub conv1_b: usize,
    pub conv2_w: usize,
    pub conv2_b: usize,
    pub flow_w: usize,
    pub flow_b: usize,
    pub entropy_w: usize,
    pub entropy_b: usize,
    pub dir_w: usize,
    pub dir_b: usize,
    pub total: usize,
}

impl Layout {
    pub const fn new() -> Layout {
        let conv1_w = 0;
        let conv1_b = conv1_w + HIDDEN * FEATURE_CHANNELS * K * K;
        let conv2_w = conv1_b + HIDDEN;
        let conv2_b = conv2_w + HIDDEN * HIDDEN * K * K;
        let flow_w = conv2_b + HIDDEN;
        let flow_b = flow_w + HIDDEN;
        let entropy_w = flow_b + 1;
        let entropy_b = entropy_w + HIDDEN;
        let dir_w = entropy_b + 1;
        let dir_b = dir_w + 2 * HIDDEN;
        Layout {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            flow_w,
            flow_b,
            entropy_w,
            entropy_b,
            dir_w,
            dir_b,
            total: dir_b + 2,
        }
    }
}

impl Default for Layout {
    fn default() -> Self {
        Layout::new()
    }
}

pub const LAYOUT: Layout = Layout::new();

/// Flat parameter vector; see [`Layout`] for the block order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros() -> Self {
        ModelParams { data: vec![0.0; LAYOUT.total] }
    }

    /// He-normal convolution and head weights, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros();
        let l = LAYOUT;
        let blocks = [
            (l.conv1_w, l.conv1_b, FEATURE_CHANNELS * K * K),
            (l.conv2_w, l.conv2_b, HIDDEN * K * K),
            (l.flow_w, l.flow_b, HIDDEN),
            (l.entropy_w, l.entropy_b, HIDDEN),
            (l.dir_w, l.dir_b, HIDDEN),
        ];
        for (start, end, fan_in) in blocks {
            let std = (2.0 / fan_in as f64).sqrt();
            for w in &mut p.data[start..end] {
                let z: f64 = rng.sample(StandardNormal);
                *w = std * z;
            }
        }
        p
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        if data.len() != LAYOUT.total {
            return Err(Error::ShapeMismatch(format!("expected {} parameters, got {}", LAYOUT.total, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("params", "parameters must be finite"));
        }
        Ok(ModelParams { data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Per-cell multipliers applied to the observation channels during
/// training; dropped cells get 0, kept cells `1 / (1 - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub scale: Vec<f64>,
}

impl DropoutMask {
    pub fn sample<R: Rng + ?Sized>(cells: usize, p: f64, rng: &mut R) -> Self {
        let keep = 1.0 - p;
        let scale = (0..cells)
            .map(|_| if p > 0.0 && rng.random::<f64>() < p { 0.0 } else if keep > 0.0 { 1.0 / keep } else { 0.0 })
            .collect();
        DropoutMask { scale }
    }
}

/// Raw head outputs: flow and entropy in (0, 1), direction components in (-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub spec: GridSpec,
    pub flow: Raster,
    pub entropy: Raster,
    pub dir_cos: Raster,
    pub dir_sin: Raster,
}

/// Direction vectors shorter than this carry no usable angle.
pub const MIN_DIRECTION_NORM: f64 = 1e-6;

impl Prediction {
    /// Descriptor maps in normalized units. Directions are reduced to unit
    /// vectors; flow is valid wherever it is positive.
    pub fn to_maps(&self, bins: usize, f_max: f64) -> DescriptorMaps {
        let n = self.flow.len();
        let mut dir_cos = Raster::zeros(self.spec.width, self.spec.height);
        let mut dir_sin = dir_cos.clone();
        let mut dir_valid = Mask::filled(self.spec.width, self.spec.height, false);
        for i in 0..n {
            let (c, s) = (self.dir_cos.data[i], self.dir_sin.data[i]);
            let norm = c.hypot(s);
            if norm > MIN_DIRECTION_NORM {
                dir_cos.data[i] = c / norm;
                dir_sin.data[i] = s / norm;
                dir_valid.data[i] = true;
            }
        }
        DescriptorMaps {
            spec: self.spec,
            bins,
            flow_valid: self.flow.map(|&f| f > 0.0),
            flow: self.flow.clone(),
            dir_cos,
            dir_sin,
            dir_valid,
            entropy: self.entropy.clone(),
            f_max: Some(f_max),
        }
    }
}

/// Supervision for one sample: normalized ground truth plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub flow: Raster,
    pub entropy: Raster,
    /// Zero on direction-invalid cells.
    pub dir_cos: Raster,
    pub dir_sin: Raster,
    /// Weights for the flow and entropy losses.
    pub weights: WeightMap,
    pub dir_weights: WeightMap,
}

impl Targets {
    /// `w_valid` on flow-valid cells for flow and entropy, on
    /// direction-valid cells for direction, `w_bg` elsewhere.
    pub fn new(gt: &DescriptorMaps, cfg: &LossConfig) -> Self {
        let dir = |r: &Raster| Raster::from_fn(r.width, r.height, |row, col| if *gt.dir_valid.get(row, col) { *r.get(row, col) } else { 0.0 });
        Targets {
            flow: gt.flow.clone(),
            entropy: gt.entropy.clone(),
            dir_cos: dir(&gt.dir_cos),
            dir_sin: dir(&gt.dir_sin),
            weights: WeightMap::from_mask(&gt.flow_valid, cfg.w_valid, cfg.w_bg),
            dir_weights: WeightMap::from_mask(&gt.dir_valid, cfg.w_valid, cfg.w_bg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub flow: f64,
    pub direction: f64,
    pub entropy: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.flow + self.direction + self.entropy
    }
}

struct Activations {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    flow: Vec<f64>,
    entropy: Vec<f64>,
    dir_cos: Vec<f64>,
    dir_sin: Vec<f64>,
}

fn leaky(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

fn leaky_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// 3×3 same-size convolution with zero padding.
fn conv_forward(input: &[f64], cin: usize, cout: usize, w: &[f64], b: &[f64], width: usize, height: usize) -> Vec<f64> {
    let n = width * height;
    let mut out = vec![0.0; cout * n];
    for o in 0..cout {
        let plane = &mut out[o * n..(o + 1) * n];
        plane.fill(b[o]);
        for i in 0..cin {
            let src = &input[i * n..(i + 1) * n];
            for ky in 0..K {
                for kx in 0..K {
                    let wv = w[((o * cin + i) * K + ky) * K + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    // output (r, c) reads input (r + ky - 1, c + kx - 1)
                    let r_lo = 1usize.saturating_sub(ky);
                    let r_hi = (height + 1 - ky).min(height);
                    let c_lo = 1usize.saturating_sub(kx);
                    let c_hi = (width + 1 - kx).min(width);
                    for r in r_lo..r_hi {
                        let sr = r + ky - 1;
                        let dst_row = &mut plane[r * width..(r + 1) * width];
                        let src_row = &src[sr * width..(sr + 1) * width];
                        for c in c_lo..c_hi {
                            dst_row[c] += wv * src_row[c + kx - 1];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients of [`conv_forward`], and the input
/// gradient when `din` is given.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    cin: usize,
    cout: usize,
    w: &[f64],
    dout: &[f64],
    width: usize,
    height: usize,
    dw: &mut [f64],
    db: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let n = width * height;
    for o in 0..cout {
        let g = &dout[o * n..(o + 1) * n];
        db[o] += g.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input[i * n..(i + 1) * n];
            for ky in 0..K {
                for kx in 0..K {
                    let widx = ((o * cin + i) * K + ky) * K + kx;
                    let r_lo = 1usize.saturating_sub(ky);
                    let r_hi = (height + 1 - ky).min(height);
                    let c_lo = 1usize.saturating_sub(kx);
                    let c_hi = (width + 1 - kx).min(width);
                    let mut acc = 0.0;
                    for r in r_lo..r_hi {
                        let sr = r + ky - 1;
                        for c in c_lo..c_hi {
                            acc += g[r * width + c] * src[sr * width + c + kx - 1];
                        }
                    }
                    dw[widx] += acc;
                    if let Some(din) = din.as_deref_mut() {
                        let wv = w[widx];
                        let dst = &mut din[i * n..(i + 1) * n];
                        for r in r_lo..r_hi {
                            let sr = r + ky - 1;
                            for c in c_lo..c_hi {
                                dst[sr * width + c + kx - 1] += wv * g[r * width + c];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn apply_dropout(features: &FeatureTensor, dropout: Option<&DropoutMask>) -> Vec<f64> {
    let mut x = features.data.clone();
    if let Some(d) = dropout {
        let n = features.cells();
        assert_eq!(d.scale.len(), n, "dropout mask size must match the grid");
        for ch in 0..OBSERVATION_CHANNELS {
            for (v, s) in x[ch * n..(ch + 1) * n].iter_mut().zip(&d.scale) {
                *v *= s;
            }
        }
    }
    x
}

fn run(params: &ModelParams, x: &[f64], spec: &GridSpec) -> Activations {
    let (width, height) = (spec.width, spec.height);
    let n = width * height;
    let p = &params.data;
    let l = LAYOUT;
    let z1 = conv_forward(x, FEATURE_CHANNELS, HIDDEN, &p[l.conv1_w..l.conv1_b], &p[l.conv1_b..l.conv2_w], width, height);
    let a1: Vec<f64> = z1.iter().map(|&z| leaky(z)).collect();
    let z2 = conv_forward(&a1, HIDDEN, HIDDEN, &p[l.conv2_w..l.conv2_b], &p[l.conv2_b..l.flow_w], width, height);
    let a2: Vec<f64> = z2.iter().map(|&z| leaky(z)).collect();
    let head = |wo: usize, bo: usize| -> Vec<f64> {
        (0..n)
            .map(|c| p[bo] + (0..HIDDEN).map(|k| p[wo + k] * a2[k * n + c]).sum::<f64>())
            .collect()
    };
    let flow = head(l.flow_w, l.flow_b).into_iter().map(sigmoid).collect();
    let entropy = head(l.entropy_w, l.entropy_b).into_iter().map(sigmoid).collect();
    let dir_cos = head(l.dir_w, l.dir_b).into_iter().map(f64::tanh).collect();
    let dir_sin = head(l.dir_w + HIDDEN, l.dir_b + 1).into_iter().map(f64::tanh).collect();
    Activations {
        z1,
        a1,
        z2,
        a2,
        flow,
        entropy,
        dir_cos,
        dir_sin,
    }
}

fn raster(spec: &GridSpec, data: Vec<f64>) -> Raster {
    Raster::from_vec(spec.width, spec.height, data).expect("one value per cell")
}

/// Predicts the maps. Dropout is applied only when a mask is supplied.
pub fn forward(params: &ModelParams, features: &FeatureTensor, dropout: Option<&DropoutMask>) -> Prediction {
    let x = apply_dropout(features, dropout);
    let act = run(params, &x, &features.spec);
    let spec = features.spec;
    Prediction {
        spec,
        flow: raster(&spec, act.flow),
        entropy: raster(&spec, act.entropy),
        dir_cos: raster(&spec, act.dir_cos),
        dir_sin: raster(&spec, act.dir_sin),
    }
}

/// Which hidden units sit on the positive side of the leaky ReLU. The loss
/// is smooth in the parameters only while this pattern is unchanged, so a
/// finite-difference probe that flips it does not measure the gradient.
pub fn activation_pattern(params: &ModelParams, features: &FeatureTensor, dropout: Option<&DropoutMask>) -> Vec<bool> {
    let x = apply_dropout(features, dropout);
    let act = run(params, &x, &features.spec);
    act.z1.iter().chain(&act.z2).map(|&z| z > 0.0).collect()
}

fn check_targets(features: &FeatureTensor, targets: &Targets) -> Result<()> {
    let (w, h) = (features.spec.width, features.spec.height);
    for r in [&targets.flow, &targets.entropy, &targets.dir_cos, &targets.dir_sin, &targets.weights.weights, &targets.dir_weights.weights] {
        if r.width != w || r.height != h {
            return Err(Error::ShapeMismatch(format!("targets are {}x{}, features {w}x{h}", r.width, r.height)));
        }
    }
    Ok(())
}

/// Loss of the prediction against `targets`, without gradients.
pub fn loss(params: &ModelParams, features: &FeatureTensor, targets: &Targets, cfg: &LossConfig) -> Result<LossBreakdown> {
    check_targets(features, targets)?;
    let pred = forward(params, features, None);
    Ok(LossBreakdown {
        flow: flow_loss(&pred.flow, &targets.flow, &targets.weights, cfg)?.value,
        direction: direction_loss(&pred.dir_cos, &pred.dir_sin, &targets.dir_cos, &targets.dir_sin, &targets.dir_weights, cfg)?.value,
        entropy: entropy_loss(&pred.entropy, &targets.entropy, &targets.weights, cfg)?.value,
    })
}

/// Total loss (flow + direction + entropy, equal weights) and its exact
/// gradient with respect to every parameter.
pub fn backward(
    params: &ModelParams,
    features: &FeatureTensor,
    targets: &Targets,
    cfg: &LossConfig,
    dropout: Option<&DropoutMask>,
) -> Result<(LossBreakdown, Vec<f64>)> {
    check_targets(features, targets)?;
    let spec = features.spec;
    let (width, height) = (spec.width, spec.height);
    let n = width * height;
    let x = apply_dropout(features, dropout);
    let act = run(params, &x, &spec);

    let fl = flow_loss(&raster(&spec, act.flow.clone()), &targets.flow, &targets.weights, cfg)?;
    let en = entropy_loss(&raster(&spec, act.entropy.clone()), &targets.entropy, &targets.weights, cfg)?;
    let di = direction_loss(
        &raster(&spec, act.dir_cos.clone()),
        &raster(&spec, act.dir_sin.clone()),
        &targets.dir_cos,
        &targets.dir_sin,
        &targets.dir_weights,
        cfg,
    )?;
    let breakdown = LossBreakdown {
        flow: fl.value,
        direction: di.value,
        entropy: en.value,
    };

    let p = &params.data;
    let l = LAYOUT;
    let mut grad = vec![0.0; l.total];
    let mut da2 = vec![0.0; HIDDEN * n];
    // (head weight offset, bias offset, d loss / d output, output, squash derivative)
    let heads: [(usize, usize, &[f64], &[f64], fn(f64) -> f64); 4] = [
        (l.flow_w, l.flow_b, &fl.grad.data, &act.flow, |y| y * (1.0 - y)),
        (l.entropy_w, l.entropy_b, &en.grad.data, &act.entropy, |y| y * (1.0 - y)),
        (l.dir_w, l.dir_b, &di.grad_cos.data, &act.dir_cos, |y| 1.0 - y * y),
        (l.dir_w + HIDDEN, l.dir_b + 1, &di.grad_sin.data, &act.dir_sin, |y| 1.0 - y * y),
    ];
    for (wo, bo, dy, y, squash) in heads {
        for c in 0..n {
            let du = dy[c] * squash(y[c]);
            if du == 0.0 {
                continue;
            }
            grad[bo] += du;
            for k in 0..HIDDEN {
                grad[wo + k] += du * act.a2[k * n + c];
                da2[k * n + c] += du * p[wo + k];
            }
        }
    }
    let dz2: Vec<f64> = da2.iter().zip(&act.z2).map(|(g, &z)| g * leaky_grad(z)).collect();
    let mut da1 = vec![0.0; HIDDEN * n];
    {
        let (head, tail) = grad.split_at_mut(l.conv2_b);
        conv_backward(
            &act.a1,
            HIDDEN,
            HIDDEN,
            &p[l.conv2_w..l.conv2_b],
            &dz2,
            width,
            height,
            &mut head[l.conv2_w..],
            &mut tail[..HIDDEN],
            Some(&mut da1),
        );
    }
    let dz1: Vec<f64> = da1.iter().zip(&act.z1).map(|(g, &z)| g * leaky_grad(z)).collect();
    {
        let (head, tail) = grad.split_at_mut(l.conv1_b);
        conv_backward(
            &x,
            FEATURE_CHANNELS,
            HIDDEN,
            &p[l.conv1_w..l.conv1_b],
            &dz1,
            width,
            height,
            &mut head[l.conv1_w..],
            &mut tail[..HIDDEN],
            None,
        );
    }
    Ok((breakdown, grad))
}
