//! Allocentric grid geometry, orientation binning and histogram accumulation.
//!
//! Cells are indexed row-major with `row` along the world y axis and `col`
//! along x, so a grid lines up with an image raster of `height` rows.

use std::f64::consts::TAU;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell size used throughout the toolkit unless a scene overrides it.
pub const DEFAULT_CELL_SIZE: f64 = 0.30;
/// Number of orientation bins covering `[0, 2π)`.
pub const DEFAULT_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

/// A `(row, col)` cell address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }
}

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, width: usize, height: usize) -> Result<Self> {
        let spec = GridSpec {
            origin_x,
            origin_y,
            cell_size,
            width,
            height,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Smallest grid anchored at `(min_x, min_y)` that covers the rectangle.
    pub fn covering(min_x: f64, min_y: f64, max_x: f64, max_y: f64, cell_size: f64) -> Result<Self> {
        if !(max_x > min_x && max_y > min_y) {
            return Err(Error::validation("extent", "max must exceed min on both axes"));
        }
        // Tolerate extents that are an exact multiple of the cell size up to rounding.
        let cells = |len: f64| ((len / cell_size) - 1e-9).ceil().max(1.0) as usize;
        GridSpec::new(min_x, min_y, cell_size, cells(max_x - min_x), cells(max_y - min_y))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::validation("cell_size", "must be positive and finite"));
        }
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::validation("origin", "must be finite"));
        }
        if self.width == 0 {
            return Err(Error::validation("width", "must be at least 1"));
        }
        if self.height == 0 {
            return Err(Error::validation("height", "must be at least 1"));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_of_index(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |row| (0..self.width).map(move |col| Cell::new(row, col)))
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Result<Cell> {
        let col = ((x - self.origin_x) / self.cell_size).floor();
        let row = ((y - self.origin_y) / self.cell_size).floor();
        if row >= 0.0 && col >= 0.0 && (row as usize) < self.height && (col as usize) < self.width {
            Ok(Cell::new(row as usize, col as usize))
        } else {
            Err(Error::OutOfBounds { x, y })
        }
    }

    pub fn cell_center(&self, cell: Cell) -> (f64, f64) {
        (
            self.origin_x + (cell.col as f64 + 0.5) * self.cell_size,
            self.origin_y + (cell.row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn max_x(&self) -> f64 {
        self.origin_x + self.width as f64 * self.cell_size
    }

    pub fn max_y(&self) -> f64 {
        self.origin_y + self.height as f64 * self.cell_size
    }
}

/// A dense row-major 2D field over a grid shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T = f64> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

pub type Mask = Raster<bool>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} raster",
                data.len()
            )));
        }
        Ok(Raster { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Raster { width, height, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.width + col]
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Raster<f64> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Raster::filled(width, height, 0.0)
    }

    pub fn for_spec(spec: &GridSpec) -> Self {
        Raster::zeros(spec.width, spec.height)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }
}

pub(crate) fn ensure_same_shape<A, B>(a: &Raster<A>, b: &Raster<B>, what: &str) -> Result<()> {
    if a.width == b.width && a.height == b.height {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )))
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(alpha: f64) -> f64 {
    let wrapped = alpha.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Orientation bin of `alpha` among `bins` equal sectors starting at 0.
pub fn bin_of(alpha: f64, bins: usize) -> usize {
    debug_assert!(bins >= 2);
    let b = (wrap_angle(alpha) * bins as f64 / TAU).floor() as usize;
    b.min(bins - 1)
}

/// Lower edge of bin `b`, the angle reported as a cell's dominant direction.
pub fn bin_angle(b: usize, bins: usize) -> f64 {
    TAU / bins as f64 * b as f64
}

/// One observation of a moving agent in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Motion direction in `[0, 2π)`.
    pub alpha: f64,
    pub agent_id: Option<u32>,
}

impl Detection {
    pub fn new(t: f64, x: f64, y: f64, alpha: f64, agent_id: Option<u32>) -> Self {
        Detection {
            t,
            x,
            y,
            alpha: wrap_angle(alpha),
            agent_id,
        }
    }
}

/// Timestamped robot pose: position plus orientation quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseStamped {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub qw: f64,
}

impl PoseStamped {
    /// Planar pose with heading `yaw` about the vertical axis.
    pub fn from_yaw(t: f64, x: f64, y: f64, yaw: f64) -> Self {
        let half = 0.5 * yaw;
        PoseStamped {
            t,
            x,
            y,
            z: 0.0,
            qx: 0.0,
            qy: 0.0,
            qz: half.sin(),
            qw: half.cos(),
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::new_normalize(Quaternion::new(self.qw, self.qx, self.qy, self.qz))
    }

    pub fn yaw(&self) -> f64 {
        self.quaternion().euler_angles().2
    }

    pub fn validate(&self) -> Result<()> {
        let norm = (self.qx * self.qx + self.qy * self.qy + self.qz * self.qz + self.qw * self.qw).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::validation("pose.q", format!("quaternion norm {norm} is not 1")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 7] {
        [self.x, self.y, self.z, self.qx, self.qy, self.qz, self.qw]
    }
}

/// Outcome of feeding a batch of detections into a histogram grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccumulateTally {
    pub accepted: usize,
    pub skipped: usize,
}

/// Per-cell orientation histograms `h_c(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    spec: GridSpec,
    bins: usize,
    counts: Vec<u32>,
}

impl HistogramGrid {
    pub fn new(spec: GridSpec, bins: usize) -> Result<Self> {
        spec.validate()?;
        if bins < 2 {
            return Err(Error::validation("bins", "need at least 2 orientation bins"));
        }
        Ok(HistogramGrid {
            spec,
            bins,
            counts: vec![0; spec.num_cells() * bins],
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn cell_counts(&self, cell: Cell) -> &[u32] {
        self.counts_at(self.spec.index(cell))
    }

    pub fn counts_at(&self, index: usize) -> &[u32] {
        &self.counts[index * self.bins..(index + 1) * self.bins]
    }

    pub fn cell_counts_mut(&mut self, cell: Cell) -> &mut [u32] {
        let i = self.spec.index(cell);
        &mut self.counts[i * self.bins..(i + 1) * self.bins]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Adds one detection; returns `false` (and leaves the grid untouched)
    /// when it falls outside the mapped region.
    pub fn accumulate(&mut self, d: &Detection) -> bool {
        match self.spec.world_to_cell(d.x, d.y) {
            Ok(cell) => {
                let b = bin_of(d.alpha, self.bins);
                self.cell_counts_mut(cell)[b] += 1;
                true
            }
            Err(_) => false,
        }
    }

    pub fn accumulate_all<'a>(&mut self, detections: impl IntoIterator<Item = &'a Detection>) -> AccumulateTally {
        let mut tally = AccumulateTally::default();
        for d in detections {
            if self.accumulate(d) {
                tally.accepted += 1;
            } else {
                tally.skipped += 1;
            }
        }
        tally
    }

    pub fn merge(&self, other: &HistogramGrid) -> Result<HistogramGrid> {
        if self.spec != other.spec || self.bins != other.bins {
            return Err(Error::SpecMismatch);
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Ok(HistogramGrid {
            spec: self.spec,
            bins: self.bins,
            counts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn spec10() -> GridSpec {
        GridSpec::new(0.0, 0.0, 0.30, 10, 10).unwrap()
    }

    #[test]
    fn world_to_cell_examples() {
        let s = spec10();
        assert_eq!(s.world_to_cell(0.0, 0.0).unwrap(), Cell::new(0, 0));
        assert_eq!(s.world_to_cell(0.45, 0.15).unwrap(), Cell::new(0, 1));
        assert!(matches!(s.world_to_cell(3.5, 0.0), Err(Error::OutOfBounds { .. })));
        assert!(s.world_to_cell(-0.01, 0.0).is_err());
    }

    #[test]
    fn bin_examples() {
        assert_eq!(bin_of(0.0, 8), 0);
        assert_eq!(bin_of(FRAC_PI_2, 8), 2);
        assert_eq!(bin_of(TAU - 1e-9, 8), 7);
        assert_eq!(bin_of(-FRAC_PI_2, 8), 6);
        assert_eq!(bin_of(PI, 8), 4);
        assert_eq!(bin_of(-1e-300, 8), 0);
    }

    #[test]
    fn accumulate_increments_one_bin() {
        let s = spec10();
        let mut g = HistogramGrid::new(s, 8).unwrap();
        let (x, y) = s.cell_center(Cell::new(2, 3));
        let d = Detection::new(0.0, x, y, 0.0, None);
        assert!(g.accumulate(&d));
        assert_eq!(g.cell_counts(Cell::new(2, 3))[0], 1);
        assert_eq!(g.total(), 1);
        g.accumulate(&d);
        assert_eq!(g.cell_counts(Cell::new(2, 3))[0], 2);
    }

    #[test]
    fn out_of_bounds_is_skipped() {
        let mut g = HistogramGrid::new(spec10(), 8).unwrap();
        let tally = g.accumulate_all(&[
            Detection::new(0.0, 5.0, 0.1, 0.0, None),
            Detection::new(0.0, 0.1, 0.1, 0.0, None),
        ]);
        assert_eq!(tally, AccumulateTally { accepted: 1, skipped: 1 });
        assert_eq!(g.total(), 1);
    }

    #[test]
    fn merge_rejects_mismatch() {
        let a = HistogramGrid::new(spec10(), 8).unwrap();
        let b = HistogramGrid::new(spec10(), 4).unwrap();
        assert!(matches!(a.merge(&b), Err(Error::SpecMismatch)));
    }

    #[test]
    fn yaw_round_trips() {
        for yaw in [-3.0, -1.0, 0.0, 0.5, 2.5] {
            let p = PoseStamped::from_yaw(0.0, 1.0, 2.0, yaw);
            p.validate().unwrap();
            assert!((p.yaw() - yaw).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(GridSpec::new(0.0, 0.0, 0.0, 3, 3).is_err());
        assert!(GridSpec::new(0.0, 0.0, 0.3, 0, 3).is_err());
        assert!(HistogramGrid::new(spec10(), 1).is_err());
        let s = GridSpec::covering(0.0, 0.0, 9.6, 6.0, 0.3).unwrap();
        assert_eq!((s.width, s.height), (32, 20));
    }
}
