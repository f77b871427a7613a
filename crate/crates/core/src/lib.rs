//! Sparse-view radiance field training.
//!
//! A positional-encoded MLP ([`field`]) is rendered by quadrature
//! ([`render`]) and fit to a few input views ([`training`]). Patches
//! rendered from unobserved viewpoints ([`geometry`]) are regularized for
//! depth smoothness and scored by a normalizing flow trained on colour
//! patches ([`flow`], [`corpus`]). Analytic scenes provide ground truth
//! ([`eval`]).

pub mod binding;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod image;
pub mod optim;
pub mod render;
pub mod training;

pub use binding::Binding;
pub use error::{Error, Result};
pub use field::{EncodingConfig, FieldConfig, FieldParams};
pub use flow::{FlowConfig, FlowParams};
pub use geometry::{AnnealSchedule, CameraIntrinsics, CameraPose, PoseSampleSpace, Ray, Vec3};
pub use image::{DepthMap, Image};
pub use render::{RadianceSource, RenderResult};
pub use training::{LossBreakdown, TrainConfig};
