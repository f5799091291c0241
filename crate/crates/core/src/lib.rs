//! Maps of Dynamics: per-cell flow, dominant direction and directional
//! entropy over a grid, built from people detections; a small crowd
//! simulator to produce them; a field-of-view model for what a robot
//! observes; and a compact map predictor trained with weighted losses.

pub mod cli;
pub mod descriptors;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod observability;
pub mod predictor;
pub mod sim;

pub use descriptors::{build_mod, weight_map, BuildParams, DescriptorMaps, Normalization, TimeWindow, WeightMap};
pub use error::{Error, Result};
pub use grid::{Cell, Detection, GridSpec, HistogramGrid, Mask, PoseStamped, Raster};
pub use observability::{local_stefmap, FovSpec, VisibilityMap};
