//! Frequency encodings of sample positions and view directions.
//!
//! Layout of a `6L`-vector: for each band `k = 0..L`, the three values
//! `sin(2ᵏπ·x₀..₂)` followed by the three values `cos(2ᵏπ·x₀..₂)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use svrf_autodiff::{Graph, NodeId};

use crate::error::{Error, Result};
use crate::geometry::{Ray, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    /// Frequency bands for positions (`L_x`).
    pub position_freqs: usize,
    /// Frequency bands for view directions (`L_d`); zero drops view dependence.
    pub direction_freqs: usize,
    /// Encode each sample as a Gaussian over its ray segment instead of a point.
    pub integrated: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            position_freqs: 8,
            direction_freqs: 4,
            integrated: true,
        }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.position_freqs < 1 {
            return Err(Error::invalid("encoding", "position_freqs must be at least 1"));
        }
        Ok(())
    }

    pub fn position_dim(&self) -> usize {
        6 * self.position_freqs
    }

    pub fn direction_dim(&self) -> usize {
        6 * self.direction_freqs
    }

    pub fn position_encoding(&self) -> &'static dyn PositionEncoding {
        if self.integrated {
            &IntegratedEncoding
        } else {
            &PointEncoding
        }
    }
}

fn band_scale(k: usize) -> f64 {
    (1u64 << k) as f64 * PI
}

pub fn positional_encode(x: &Vec3, freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * freqs);
    push_encoding(x, &Vec3::zeros(), freqs, &mut out);
    out
}

/// Appends the (optionally variance-damped) encoding of `mean`.
fn push_encoding(mean: &Vec3, variance: &Vec3, freqs: usize, out: &mut Vec<f64>) {
    for k in 0..freqs {
        let s = band_scale(k);
        let damp = Vec3::from_fn(|j, _| (-0.5 * s * s * variance[j]).exp());
        for j in 0..3 {
            out.push((s * mean[j]).sin() * damp[j]);
        }
        for j in 0..3 {
            out.push((s * mean[j]).cos() * damp[j]);
        }
    }
}

/// Axis-aligned Gaussian approximation of a ray segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySegmentGaussian {
    pub mean: Vec3,
    pub variance: Vec3,
    pub t_start: f64,
    pub t_end: f64,
}

impl RaySegmentGaussian {
    pub fn new(mean: Vec3, variance: Vec3, t_start: f64, t_end: f64) -> Result<Self> {
        if variance.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("segment gaussian", "variances must be non-negative"));
        }
        if !(t_start < t_end) {
            return Err(Error::invalid("segment gaussian", "need t_start < t_end"));
        }
        Ok(Self {
            mean,
            variance,
            t_start,
            t_end,
        })
    }

    /// Segment `[t_start, t_end]` of `ray`, whose cross-section radius grows
    /// as `footprint · t`. Along-ray variance is `len²/12`, transverse
    /// variance `radius²/4`, projected onto the world axes.
    pub fn from_segment(ray: &Ray, t_start: f64, t_end: f64, footprint: f64) -> Result<Self> {
        let t_mid = 0.5 * (t_start + t_end);
        let len = t_end - t_start;
        let var_along = len * len / 12.0;
        let radius = footprint * t_mid;
        let var_across = radius * radius / 4.0;
        let d = ray.direction;
        let variance = Vec3::from_fn(|j, _| var_along * d[j] * d[j] + var_across * (1.0 - d[j] * d[j]));
        Self::new(ray.at(t_mid), variance, t_start, t_end)
    }
}

/// Expected encoding under the segment Gaussian: each band damped by
/// `exp(−½(2ᵏπ)²σ²ⱼ)`.
pub fn integrated_encode(seg: &RaySegmentGaussian, freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * freqs);
    push_encoding(&seg.mean, &seg.variance, freqs, &mut out);
    out
}

/// Strategy for turning a ray sample (the segment `[t, t_next]`) into the
/// field's position input.
pub trait PositionEncoding: Send + Sync {
    fn name(&self) -> &'static str;

    fn encode_sample(&self, ray: &Ray, t: f64, t_next: f64, footprint: f64, freqs: usize, out: &mut Vec<f64>);
}

/// Encodes the sample point `r(t)` itself.
pub struct PointEncoding;

impl PositionEncoding for PointEncoding {
    fn name(&self) -> &'static str {
        "point"
    }

    fn encode_sample(&self, ray: &Ray, t: f64, _t_next: f64, _footprint: f64, freqs: usize, out: &mut Vec<f64>) {
        push_encoding(&ray.at(t), &Vec3::zeros(), freqs, out);
    }
}

/// Encodes the Gaussian approximating the segment between `t` and `t_next`.
pub struct IntegratedEncoding;

impl PositionEncoding for IntegratedEncoding {
    fn name(&self) -> &'static str {
        "integrated"
    }

    fn encode_sample(&self, ray: &Ray, t: f64, t_next: f64, footprint: f64, freqs: usize, out: &mut Vec<f64>) {
        let t_next = if t_next > t {
            t_next
        } else {
            t + f64::EPSILON.max(t.abs() * 1e-12)
        };
        let seg = RaySegmentGaussian::from_segment(ray, t, t_next, footprint).expect("ordered, finite segment");
        push_encoding(&seg.mean, &seg.variance, freqs, out);
    }
}

static ENCODINGS: [&dyn PositionEncoding; 2] = [&PointEncoding, &IntegratedEncoding];

pub fn encoding_names() -> Vec<&'static str> {
    ENCODINGS.iter().map(|e| e.name()).collect()
}

pub fn encoding_by_name(name: &str) -> Result<&'static dyn PositionEncoding> {
    ENCODINGS
        .iter()
        .copied()
        .find(|e| e.name() == name)
        .ok_or_else(|| Error::Unknown {
            kind: "encoding",
            name: name.to_string(),
            available: encoding_names().join(", "),
        })
}

/// Differentiable point encoding of an `N×3` position node.
pub fn encode_node(g: &mut Graph, x: NodeId, freqs: usize) -> NodeId {
    let mut parts = Vec::with_capacity(2 * freqs);
    for k in 0..freqs {
        let scaled = g.scale(x, band_scale(k));
        parts.push(g.sin(scaled));
        parts.push(g.cos(scaled));
    }
    g.concat_cols(&parts)
}
