//! Synthetic scenes, ground-truth datasets and metrics.

pub mod dataset;
pub mod metrics;
pub mod scene;

pub use dataset::{
    even_selection, make_dataset, oracle_render, Dataset, DatasetOptions, Frame, Manifest, MANIFEST_FILE,
};
pub use metrics::{
    aggregate_metric, depth_mae, mse, psnr, psnr_from_mse, ssim, MetricsReport, AGGREGATE_LABEL, AGGREGATE_NOTE,
};
pub use scene::{scene_by_name, scene_names, Albedo, Primitive, SceneBuilder, Shape, SyntheticScene};
