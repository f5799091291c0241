//! PNG rendering of map layers.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::descriptors::DescriptorMaps;
use crate::error::{Error, Result};

use super::atomic::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Flow,
    Entropy,
    Direction,
}

impl std::str::FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Layer> {
        match s {
            "flow" => Ok(Layer::Flow),
            "entropy" => Ok(Layer::Entropy),
            "direction" => Ok(Layer::Direction),
            _ => Err(Error::validation("layer", format!("unknown layer `{s}` (flow, entropy, direction)"))),
        }
    }
}

/// Dark blue through teal and green to yellow.
const RAMP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Colormap lookup for `v` in `[0, 1]` (clamped).
pub fn colormap(v: f64) -> Rgb<u8> {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let x = v * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (RAMP[i][k] + f * (RAMP[i + 1][k] - RAMP[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// HSV with full value to RGB; `h` in turns.
pub fn hsv(h: f64, s: f64) -> Rgb<u8> {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor() as u32 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (1.0 - s, 1.0 - s * f, 1.0 - s * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (1.0, t, p),
        1 => (q, 1.0, p),
        2 => (p, 1.0, t),
        3 => (p, q, 1.0),
        4 => (t, p, 1.0),
        _ => (1.0, p, q),
    };
    let c = |v: f64| (v * 255.0).round() as u8;
    Rgb([c(r), c(g), c(b)])
}

/// One `scale × scale` block per cell, north up. Flow is scaled by its
/// maximum and entropy by `ln B` unless the maps are already normalized.
/// Direction uses hue for angle and full saturation on valid cells only,
/// so invalid cells are white.
pub fn render(maps: &DescriptorMaps, layer: Layer, scale: u32) -> Result<RgbImage> {
    if scale == 0 {
        return Err(Error::validation("scale", "must be at least 1"));
    }
    let spec = maps.spec;
    let ln_b = (maps.bins as f64).ln();
    let flow_max = maps.flow.data.iter().copied().fold(0.0, f64::max);
    let color = |i: usize| -> Rgb<u8> {
        match layer {
            Layer::Flow => {
                let f = maps.flow.data[i];
                colormap(if maps.is_normalized() { f } else if flow_max > 0.0 { f / flow_max } else { 0.0 })
            }
            Layer::Entropy => {
                let e = maps.entropy.data[i];
                colormap(if maps.is_normalized() { e } else { e / ln_b })
            }
            Layer::Direction => match maps.angle_at(i) {
                Some(a) => hsv(a / std::f64::consts::TAU, 1.0),
                None => hsv(0.0, 0.0),
            },
        }
    };
    let (w, h) = (spec.width as u32 * scale, spec.height as u32 * scale);
    let mut img = RgbImage::new(w, h);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let col = (x / scale) as usize;
        // image rows run top-down, grid rows bottom-up
        let row = spec.height - 1 - (y / scale) as usize;
        *px = color(row * spec.width + col);
    }
    Ok(img)
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    write_atomic(path, &bytes)
}
