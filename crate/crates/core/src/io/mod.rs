//! File formats: detection and pose tables, the grid container, dataset
//! directories, model files, JSON reports and PNG renders.

mod atomic;
pub mod dataset;
pub mod gridfile;
pub mod maps;
pub mod model;
pub mod render;
pub mod report;
pub mod table;

pub use atomic::write_atomic;
pub use dataset::{read_dataset, write_dataset, DatasetMetadata};
pub use gridfile::GridFile;
pub use maps::{quantize_maps, read_maps, write_maps, MapsSidecar};
pub use model::{quantize_params, read_model, write_model, ModelManifest};
pub use render::{render, Layer};
pub use report::{detector_gap, GapReport};
